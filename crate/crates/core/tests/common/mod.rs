//! Seeded corpora shared by the integration tests.
#![allow(dead_code)]

use afriat::collective::AllocationSolution;
use afriat::datagen::{
    gen_cobb_douglas, gen_collective, gen_nested_cd, perturb, random_exponents, Budget, CobbDouglasSpec,
};
use afriat::harp::check_harp;
use afriat::model::{partition, MarketStatistics, PartitionedStatistics};
use afriat::Status;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One Cobb-Douglas consumer with `T` in `periods` and `n` in `goods`.
pub fn cobb_douglas(
    seed: u64,
    periods: std::ops::RangeInclusive<usize>,
    goods: std::ops::RangeInclusive<usize>,
) -> (MarketStatistics<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let t = r.gen_range(periods);
    let n = r.gen_range(goods);
    let spec = CobbDouglasSpec {
        budget: Budget::LogUniform(0.5, 2.0),
        ..CobbDouglasSpec::new(random_exponents(n, seed ^ 0x5eed), 1.0, seed)
    };
    (gen_cobb_douglas(&spec, t).unwrap(), spec.exponents)
}

pub struct Nested {
    pub part: PartitionedStatistics<f64>,
    pub q_exponents: Vec<f64>,
    pub y_exponents: Vec<f64>,
    pub shares: (f64, f64),
}

/// Two-level Cobb-Douglas data with `k` goods in the first block and `l`
/// in the separable block.
pub fn nested(seed: u64, k: usize, l: usize, periods: std::ops::RangeInclusive<usize>) -> Nested {
    let mut r = rng(seed);
    let t = r.gen_range(periods);
    let a = r.gen_range(0.2..0.8);
    let q = CobbDouglasSpec {
        budget: Budget::LogUniform(0.5, 2.0),
        ..CobbDouglasSpec::new(random_exponents(k, seed.wrapping_mul(3) + 1), 1.0, seed)
    };
    let y = CobbDouglasSpec::new(random_exponents(l, seed.wrapping_mul(3) + 2), 1.0, seed);
    let part = gen_nested_cd(&q, &y, (a, 1.0 - a), t, seed).unwrap();
    Nested {
        part,
        q_exponents: q.exponents,
        y_exponents: y.exponents,
        shares: (a, 1.0 - a),
    }
}

/// Cobb-Douglas `q` block next to a `y` block that fails the homogeneous
/// test, found by perturbing Cobb-Douglas data until it breaks.
pub fn bad_y_block(seed: u64, k: usize, l: usize, periods: std::ops::RangeInclusive<usize>) -> PartitionedStatistics<f64> {
    let mut r = rng(seed);
    let t = r.gen_range(periods);
    let q = gen_cobb_douglas(&CobbDouglasSpec::new(random_exponents(k, seed + 7), 1.0, seed), t).unwrap();
    let y = (0..)
        .map(|attempt| {
            let spec = CobbDouglasSpec::new(random_exponents(l, seed + 11), 1.0, seed * 1000 + attempt);
            perturb(&gen_cobb_douglas(&spec, t).unwrap(), 0.4, seed * 1000 + attempt).unwrap()
        })
        .find(|y| check_harp(y, 1e-9).unwrap().status() == Status::Infeasible)
        .unwrap();
    join_blocks(&q, &y)
}

/// `q` goods first, then the `y` goods as the separable block.
pub fn join_blocks(q: &MarketStatistics<f64>, y: &MarketStatistics<f64>) -> PartitionedStatistics<f64> {
    let rows = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter().zip(b).map(|(x, z)| x.iter().chain(z).copied().collect()).collect()
    };
    let base = MarketStatistics::new(rows(q.prices(), y.prices()), rows(q.quantities(), y.quantities())).unwrap();
    let y_block: Vec<usize> = (q.goods()..q.goods() + y.goods()).collect();
    partition(&base, &y_block).unwrap()
}

pub struct Aggregate {
    pub seed: u64,
    pub stats: MarketStatistics<f64>,
    pub witness: AllocationSolution<f64>,
    pub worst_ratio: f64,
}

/// Two Cobb-Douglas consumers whose budgets move independently, filtered
/// so the aggregate fails the single-consumer test by a clear margin.
/// Scans seeds upward from `first_seed`.
pub fn two_consumer_aggregates(first_seed: u64, count: usize, max_periods: usize, max_goods: usize) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < count {
        seed += 1;
        let mut r = rng(seed);
        let n = r.gen_range(2..=max_goods);
        let t = r.gen_range(3..=max_periods);
        let specs: Vec<_> = (0..2)
            .map(|a| CobbDouglasSpec {
                budget: Budget::LogUniform(0.5, 2.0),
                ..CobbDouglasSpec::new(random_exponents(n, seed * 7 + a), 1.0, 0)
            })
            .collect();
        let (stats, witness) = gen_collective(&specs, t, seed).unwrap();
        let h = check_harp(&stats, 1e-3).unwrap();
        if h.status() != Status::Infeasible {
            continue;
        }
        let worst_ratio = h.cycle.as_ref().unwrap().cycle_ratio;
        out.push(Aggregate {
            seed,
            stats,
            witness,
            worst_ratio,
        });
    }
    out
}

/// Random positive data, for corpora that should mix outcomes.
pub fn random_stats(r: &mut ChaCha8Rng, periods: usize, goods: usize) -> MarketStatistics<f64> {
    let mut draw = || (0..periods).map(|_| (0..goods).map(|_| r.gen_range(0.2..5.0)).collect()).collect::<Vec<Vec<f64>>>();
    let prices = draw();
    let quantities = draw();
    MarketStatistics::new(prices, quantities).unwrap()
}

/// Smallest product of expenditure ratios over every simple cycle, by
/// enumeration; meant for `T <= 5`.
pub fn min_cycle_ratio(stats: &MarketStatistics<f64>) -> f64 {
    let t = stats.periods();
    let step = |a: usize, b: usize| stats.cost(b, a) / stats.cost(a, a);
    let mut best = f64::INFINITY;
    let mut path = vec![0usize];
    fn extend(path: &mut Vec<usize>, t: usize, step: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        let start = path[0];
        let last = *path.last().unwrap();
        if path.len() >= 2 {
            let mut prod = step(last, start);
            for w in path.windows(2) {
                prod *= step(w[0], w[1]);
            }
            *best = best.min(prod);
        }
        for next in start + 1..t {
            if !path.contains(&next) {
                path.push(next);
                extend(path, t, step, best);
                path.pop();
            }
        }
    }
    for s in 0..t {
        path[0] = s;
        extend(&mut path, t, &step, &mut best);
    }
    best
}
