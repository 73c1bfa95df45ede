//! Acceptance suite. Each test is one numbered criterion; the harness
//! prints one `ok` / `FAILED` line per test. Run with `--nocapture` to see
//! the measured figures behind each verdict.

mod common;

use std::time::Instant;

use afriat::collective::{
    build_collective_program, check_collective, class_number, extend_by_split, verify_allocation, ClassNumber,
    CollectiveOptions,
};
use afriat::convex::{eval_constraint, gradient, LogConvexProgram};
use afriat::datagen::{gen_collective, random_exponents, Budget, CobbDouglasSpec};
use afriat::harp::{check_harp, recover_utility, verify_certificate};
use afriat::model::{MarketStatistics, PartitionedStatistics};
use afriat::oracle::{oracle_collective, oracle_harp, oracle_separability, GridSpec};
use afriat::separability::{
    build_separability_program, check_separability, verify_separability_solution, young_transform,
    SeparabilityInstance, SeparabilityResult,
};
use afriat::Status;
use rand::Rng;

const ACCEPT: f64 = 1e-6;
const REJECT: f64 = 1e-4;

fn report(n: u32, line: String) {
    eprintln!("criterion {n}: {line}");
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cd_corpus() -> Vec<MarketStatistics<f64>> {
    (0..200).map(|s| common::cobb_douglas(1000 + s, 2..=50, 2..=20).0).collect()
}

#[test]
fn criterion_01_harp_accepts_cobb_douglas() {
    let corpus = cd_corpus();
    let start = Instant::now();
    let mut accepted = 0;
    for stats in &corpus {
        let r = check_harp(stats, 1e-9).unwrap();
        assert_eq!(r.status(), Status::Feasible, "{}", r.decision.detail);
        assert!(verify_certificate(stats, r.certificate.as_ref().unwrap(), 1e-9));
        accepted += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(1, format!("{accepted}/200 feasible and verified in {elapsed:.3} s"));
    assert!(elapsed < 5.0);
}

#[test]
fn criterion_02_harp_rejects_the_two_period_cycle() {
    let stats = MarketStatistics::<f64>::new(
        vec![vec![1.0, 1.0], vec![2.0, 1.0]],
        vec![vec![0.25, 0.5], vec![0.5, 0.5]],
    )
    .unwrap();
    let r = check_harp(&stats, 1e-9).unwrap();
    assert_eq!(r.status(), Status::Infeasible);
    let cycle = r.cycle.unwrap();
    let mut periods = cycle.periods.clone();
    periods.sort_unstable();
    assert_eq!(periods, vec![0, 1]);
    let err: f64 = (cycle.cycle_ratio - 8.0 / 9.0).abs();
    report(2, format!("cycle {:?} ratio error {err:.1e}", cycle.periods));
    assert!(err <= 1e-12);
}

#[test]
fn criterion_03_recovered_utility_matches_expenditure() {
    let mut worst_fit = 0.0f64;
    let mut worst_homog = 0.0f64;
    for stats in cd_corpus() {
        let cert = check_harp(&stats, 1e-9).unwrap().certificate.unwrap();
        let f = recover_utility(&cert, &stats).unwrap();
        for t in 0..stats.periods() {
            let q = stats.quantity(t);
            let expected = cert.lambdas[t] * stats.expenditure(t);
            worst_fit = worst_fit.max((f.value(q) - expected).abs() / expected);
            for c in [0.5, 3.0] {
                let scaled: Vec<f64> = q.iter().map(|v| c * v).collect();
                let rel = (f.value(&scaled) - c * f.value(q)).abs() / (c * f.value(q));
                worst_homog = worst_homog.max(rel);
            }
        }
    }
    report(3, format!("fit error {worst_fit:.1e}, homogeneity error {worst_homog:.1e}"));
    assert!(worst_fit <= 1e-9);
    assert!(worst_homog <= 1e-12);
}

/// A point in the domain of every log-residual, found by shrinking a random
/// perturbation of the program's start.
fn interior_point(program: &LogConvexProgram<f64>, r: &mut impl Rng) -> Vec<f64> {
    let start = program.start();
    let mut scale = 0.5;
    loop {
        let x: Vec<f64> = start.iter().map(|&v| v + scale * r.gen_range(-1.0..1.0)).collect();
        if program.constraints().iter().all(|c| c.residual(&x).is_none_or(|v| v > 0.0)) {
            return x;
        }
        scale *= 0.5;
    }
}

fn worst_gradient_error(program: &LogConvexProgram<f64>, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (k, c) in program.constraints().iter().enumerate() {
        let g = gradient(c, x, k).unwrap();
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut err = 0.0f64;
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += h;
            lo[i] -= h;
            let numeric = (eval_constraint(c, &hi) - eval_constraint(c, &lo)) / (2.0 * h);
            err = err.max((numeric - g[i]).abs());
        }
        if norm > 0.0 {
            worst = worst.max(err / norm);
        }
    }
    worst
}

#[test]
fn criterion_04_gradients_match_central_differences() {
    let mut r = common::rng(4);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let periods = r.gen_range(2..=5);
        let n = common::nested(400 + i, r.gen_range(1..=3), r.gen_range(1..=3), periods..=periods);
        let program = build_separability_program(&SeparabilityInstance::new(n.part));
        let x = interior_point(&program, &mut r);
        worst = worst.max(worst_gradient_error(&program, &x));
    }
    for i in 0..50u64 {
        let (goods, periods, k) = (r.gen_range(2..=3), r.gen_range(2..=4), r.gen_range(2..=3));
        let specs: Vec<_> = (0..k)
            .map(|a| CobbDouglasSpec::new(random_exponents(goods, 10 * i + a as u64), 1.0, 0))
            .collect();
        let (stats, _) = gen_collective(&specs, periods, 500 + i).unwrap();
        let program = build_collective_program(&stats, k).unwrap();
        let x = interior_point(&program, &mut r);
        worst = worst.max(worst_gradient_error(&program, &x));
    }
    report(4, format!("100 pairs, worst relative gradient error {worst:.1e}"));
    assert!(worst <= 1e-5);
}

fn separable_corpus() -> Vec<(PartitionedStatistics<f64>, SeparabilityResult<f64>, f64)> {
    (0..50)
        .map(|s| {
            let n = common::nested(5000 + s, 3, 3, 3..=12);
            let start = Instant::now();
            let r = check_separability(&n.part, ACCEPT, REJECT).unwrap();
            (n.part, r, start.elapsed().as_secs_f64())
        })
        .collect()
}

#[test]
fn criterion_05_nested_cobb_douglas_is_separable() {
    let corpus = separable_corpus();
    let mut worst_time = 0.0f64;
    let mut worst_opt = 0.0f64;
    for (part, r, secs) in &corpus {
        assert_eq!(r.status(), Status::Feasible, "{}", r.decision.detail);
        let opt = r.decision.optimum.unwrap();
        assert!(opt <= ACCEPT);
        let inst = SeparabilityInstance::new(part.clone());
        assert!(verify_separability_solution(&inst, &r.lambdas, &r.mus, ACCEPT));
        worst_time = worst_time.max(*secs);
        worst_opt = worst_opt.max(opt);
    }
    report(
        5,
        format!("50/50 separable, worst optimum {worst_opt:.1e}, slowest {worst_time:.3} s"),
    );
    assert!(worst_time < 10.0);
}

#[test]
fn criterion_06_bad_subblock_is_not_separable() {
    for s in 0..50 {
        let part = common::bad_y_block(6000 + s, 2, 2, 4..=10);
        let r = check_separability(&part, ACCEPT, REJECT).unwrap();
        assert_eq!(r.status(), Status::Infeasible, "seed {s}: {}", r.decision.detail);
    }
    report(6, "50/50 rejected".into());
}

#[test]
fn criterion_07_price_index_duality() {
    let mut worst_eq = 0.0f64;
    let mut worst_ineq = f64::NEG_INFINITY;
    for (part, r, _) in separable_corpus() {
        let u1 = r.subutility.as_ref().unwrap();
        let y = part.y_stats();
        let nu: Vec<f64> = (0..y.periods()).map(|t| young_transform(u1, y.price(t)).unwrap()).collect();
        for t in 0..y.periods() {
            let u = u1.value(y.quantity(t));
            let spend = dot(y.price(t), y.quantity(t));
            worst_eq = worst_eq.max((nu[t] * u - spend).abs() / spend);
            for (tau, &nu_tau) in nu.iter().enumerate() {
                let cross = dot(y.price(tau), y.quantity(t));
                worst_ineq = worst_ineq.max(nu_tau * u / cross - 1.0);
            }
        }
    }
    report(
        7,
        format!("equality error {worst_eq:.1e}, largest inequality excess {worst_ineq:.1e}"),
    );
    assert!(worst_eq <= 1e-8);
    assert!(worst_ineq <= 1e-8);
}

fn collective_corpus() -> Vec<common::Aggregate> {
    common::two_consumer_aggregates(0, 20, 6, 4)
}

#[test]
fn criterion_08_two_consumer_aggregates_have_class_number_two() {
    let mut worst_time = 0.0f64;
    for agg in collective_corpus() {
        assert!(agg.worst_ratio < 1.0 - 1e-3);
        let start = Instant::now();
        let r = class_number(&agg.stats, agg.stats.goods(), &CollectiveOptions::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        worst_time = worst_time.max(secs);
        assert_eq!(r.value, ClassNumber::Exact(2), "seed {}: {:?}", agg.seed, r.per_k);
        assert!(verify_allocation(&agg.stats, r.witness.as_ref().unwrap(), ACCEPT));
        assert!(secs < 60.0, "seed {} took {secs:.1} s", agg.seed);
    }
    report(8, format!("20/20 exact at two, slowest {worst_time:.2} s"));
}

#[test]
fn criterion_09_acceptance_is_monotone_in_k() {
    let opts = CollectiveOptions::default();
    let mut checked = 0;
    let single: Vec<MarketStatistics<f64>> = (0..5).map(|s| common::cobb_douglas(900 + s, 3..=6, 2..=3).0).collect();
    let pairs = collective_corpus().into_iter().take(5).map(|a| a.stats);
    for (stats, k) in single.into_iter().map(|s| (s, 1)).chain(pairs.map(|s| (s, 2))) {
        let r = afriat::collective::check_collective_with(&stats, k, &opts).unwrap();
        assert_eq!(r.status(), Status::Feasible);
        let split = extend_by_split(r.allocation.as_ref().unwrap());
        assert!(verify_allocation(&stats, &split, ACCEPT));
        let next = check_collective(&stats, k + 1, ACCEPT, REJECT).unwrap();
        assert_eq!(next.status(), Status::Feasible, "k={} {}", k + 1, next.decision.detail);
        checked += 1;
    }
    report(9, format!("{checked} accepted (instance, k) pairs stay accepted at k+1"));
}

struct Agreement {
    decided: usize,
    excluded: usize,
}

fn tally(pipeline: Status, oracle: Status, a: &mut Agreement, what: &str) {
    if pipeline != Status::Undecided && oracle != Status::Undecided {
        assert_eq!(pipeline, oracle, "{what}");
        a.decided += 1;
    }
}

#[test]
fn criterion_10_pipeline_agrees_with_oracles() {
    let grid = GridSpec::<f64>::default();
    let boundary = 10.0 * grid.tolerance;
    let near_one = |ratio: f64| (ratio - 1.0).abs() <= boundary;

    let mut harp = Agreement { decided: 0, excluded: 0 };
    let mut r = common::rng(10);
    let mut seen = 0;
    while seen < 50 {
        let (t, n) = (r.gen_range(2..=4), r.gen_range(2..=3));
        let stats = if r.gen_bool(0.5) {
            common::cobb_douglas(r.gen(), t..=t, n..=n).0
        } else {
            common::random_stats(&mut r, t, n)
        };
        if near_one(common::min_cycle_ratio(&stats)) {
            harp.excluded += 1;
            continue;
        }
        seen += 1;
        let p = check_harp(&stats, 1e-9).unwrap().status();
        let o = oracle_harp(&stats, &grid).unwrap().status;
        tally(p, o, &mut harp, "harp");
    }

    let mut sep = Agreement { decided: 0, excluded: 0 };
    let mut seen = 0;
    let mut seed = 0;
    while seen < 50 {
        seed += 1;
        let part = match seed % 3 {
            0 => common::nested(70_000 + seed, 1, 2, 2..=3).part,
            1 => common::bad_y_block(70_000 + seed, 1, 2, 2..=3),
            _ => {
                let t = r.gen_range(2..=3);
                let (q, y) = (common::random_stats(&mut r, t, 1), common::random_stats(&mut r, t, 2));
                common::join_blocks(&q, &y)
            }
        };
        let ratios = [
            common::min_cycle_ratio(part.y_stats()),
            common::min_cycle_ratio(part.base()),
        ];
        if ratios.iter().any(|&v| near_one(v)) {
            sep.excluded += 1;
            continue;
        }
        seen += 1;
        let p = check_separability(&part, ACCEPT, REJECT).unwrap().status();
        let o = oracle_separability(&part, &grid).unwrap().status;
        tally(p, o, &mut sep, &format!("separability seed {seed}"));
    }

    let mut col = Agreement { decided: 0, excluded: 0 };
    let mut seen = 0;
    while seen < 50 {
        let k = 1 + seen % 2;
        let stats = if r.gen_bool(0.5) {
            let specs: Vec<_> = (0..2)
                .map(|_| CobbDouglasSpec {
                    budget: Budget::LogUniform(0.5, 2.0),
                    ..CobbDouglasSpec::new(random_exponents(2, r.gen()), 1.0, 0)
                })
                .collect();
            gen_collective(&specs, 2, r.gen()).unwrap().0
        } else {
            common::random_stats(&mut r, 2, 2)
        };
        if near_one(common::min_cycle_ratio(&stats)) {
            col.excluded += 1;
            continue;
        }
        seen += 1;
        let p = check_collective(&stats, k, ACCEPT, REJECT).unwrap().status();
        let o = oracle_collective(&stats, k, &grid).unwrap().status;
        tally(p, o, &mut col, &format!("collective k={k}"));
    }

    report(
        10,
        format!(
            "mutually decided harp {}/50, separability {}/50, collective {}/50; boundary cases skipped {}, {}, {}",
            harp.decided, sep.decided, col.decided, harp.excluded, sep.excluded, col.excluded
        ),
    );
    // Agreement over a handful of cases would prove little.
    assert!(harp.decided >= 40 && sep.decided >= 40 && col.decided >= 40);
}

#[test]
fn criterion_11_reruns_are_bitwise_identical() {
    fn run_all() -> Vec<String> {
        let mut out = Vec::new();
        for stats in cd_corpus().iter().take(20) {
            out.push(serde_json::to_string(&check_harp(stats, 1e-9).unwrap()).unwrap());
        }
        for s in 0..5 {
            let n = common::nested(5000 + s, 3, 3, 3..=12);
            out.push(serde_json::to_string(&check_separability(&n.part, ACCEPT, REJECT).unwrap()).unwrap());
        }
        for agg in common::two_consumer_aggregates(0, 3, 6, 4) {
            let r = class_number(&agg.stats, agg.stats.goods(), &CollectiveOptions::default()).unwrap();
            out.push(serde_json::to_string(&r).unwrap());
        }
        let tiny = common::cobb_douglas(3, 3..=3, 2..=2).0;
        out.push(serde_json::to_string(&oracle_harp(&tiny, &GridSpec::default()).unwrap()).unwrap());
        out
    }
    let (a, b) = (run_all(), run_all());
    assert_eq!(a.len(), b.len());
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    report(11, format!("{same}/{} reports identical", a.len()));
    assert_eq!(same, a.len());
}
