//! Collective rationalization: can the aggregate demand be split into `k`
//! bundles, each rationalized by its own PH utility at the common prices?
//!
//! The class number is the least such `k`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{self, Affine, ConstraintRecord, ExpTerm, LogConvexProgram, SolveOptions};
use crate::error::{Error, Result};
use crate::harp::{self, AfriatCertificate};
use crate::model::{Decision, MarketStatistics, Status};
use crate::scalar::{dot, normalize_from_logs, Scalar};
use crate::separability::{DEFAULT_TOL_ACCEPT, DEFAULT_TOL_REJECT};

/// A split of the aggregate bundles among `k` consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct AllocationSolution<S> {
    pub k: usize,
    /// `[consumer][period][good]`.
    pub sub_quantities: Vec<Vec<Vec<S>>>,
    /// `[consumer][period]`, each row summing to one.
    pub sub_lambdas: Vec<Vec<S>>,
    /// Unallocated amounts `[period][good]`.
    pub residuals: Vec<Vec<S>>,
}

impl<S: Scalar> AllocationSolution<S> {
    /// Statistics of one consumer at the common prices.
    pub fn consumer_stats(&self, prices: &[Vec<S>], alpha: usize) -> Result<MarketStatistics<S>> {
        MarketStatistics::new(prices.to_vec(), self.sub_quantities[alpha].clone())
    }

    pub fn residual_max(&self) -> S {
        self.residuals
            .iter()
            .flatten()
            .copied()
            .fold(S::zero(), S::max)
    }
}

fn lambda_index(periods: usize, alpha: usize, t: usize) -> usize {
    alpha * periods + t
}

/// Variables: `lambda~[alpha][t]`, then `q~[alpha][t][i]`, then the
/// residual slacks `gamma[t][i]`.
pub fn build_collective_program<S: Scalar>(stats: &MarketStatistics<S>, k: usize) -> Result<LogConvexProgram<S>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one consumer".into()));
    }
    let (periods, goods) = (stats.periods(), stats.goods());
    let mut p = LogConvexProgram::new();
    let lam_start = -(S::count(2 * periods)).ln();
    for alpha in 0..k {
        for t in 0..periods {
            p.add_log_var(format!("lambda{alpha}_{t}"), lam_start);
        }
    }
    let base = k * periods;
    let q = |alpha: usize, t: usize, i: usize| base + (alpha * periods + t) * goods + i;
    for alpha in 0..k {
        for t in 0..periods {
            for i in 0..goods {
                let start = (stats.quantity(t)[i] / S::count(2 * k)).ln();
                p.add_log_var(format!("q{alpha}_{t}_{i}"), start);
            }
        }
    }
    let gammas: Vec<Vec<usize>> = (0..periods)
        .map(|t| (0..goods).map(|i| p.add_slack(format!("gamma{t}_{i}"), S::zero())).collect())
        .collect();

    for alpha in 0..k {
        for t in 0..periods {
            for tau in 0..periods {
                let lhs: Vec<ExpTerm<S>> = (0..goods)
                    .map(|i| ExpTerm::new(stats.price(t)[i], Affine::var(q(alpha, t, i))))
                    .collect();
                let others: Vec<ExpTerm<S>> = (0..k)
                    .filter(|&beta| beta != alpha)
                    .flat_map(|beta| {
                        (0..goods).map(move |i| ExpTerm::new(stats.price(tau)[i], Affine::var(q(beta, t, i))))
                    })
                    .collect();
                p.add_constraint(
                    ConstraintRecord::new(format!("consumer {alpha} t={t} tau={tau}"))
                        .lhs_affine(Affine::var(lambda_index(periods, alpha, t)))
                        .lhs_lse(lhs)
                        .rhs_affine(Affine::var(lambda_index(periods, alpha, tau)))
                        .rhs_logres(stats.cost(tau, t), others, vec![]),
                );
            }
        }
    }
    for (t, row) in gammas.iter().enumerate() {
        for (i, &gamma) in row.iter().enumerate() {
            let c = p.add_constraint(
                ConstraintRecord::new(format!("balance t={t} i={i}"))
                    .lhs_lse(
                        (0..k)
                            .map(|alpha| ExpTerm::new(S::one(), Affine::var(q(alpha, t, i))))
                            .collect(),
                    )
                    .rhs_logres(stats.quantity(t)[i], vec![], vec![(gamma, S::one())]),
            );
            p.bind_slack(gamma, c);
        }
    }
    Ok(p)
}

/// Adds `q~[alpha][t][i] >= log(floor * Q^t_i)` for every consumer.
///
/// Without it the residual slacks can stand in for a consumer whose bundle
/// shrinks towards zero, and the optimum zero is approached by splits that
/// do not rationalize anything.
pub fn add_share_floor<S: Scalar>(program: &mut LogConvexProgram<S>, stats: &MarketStatistics<S>, k: usize, floor: S) {
    let (periods, goods) = (stats.periods(), stats.goods());
    let base = k * periods;
    for alpha in 0..k {
        for t in 0..periods {
            for i in 0..goods {
                program.add_constraint(
                    ConstraintRecord::new(format!("floor {alpha} t={t} i={i}"))
                        .lhs_affine(Affine::constant((floor * stats.quantity(t)[i]).ln()))
                        .rhs_affine(Affine::var(base + (alpha * periods + t) * goods + i)),
                );
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CollectiveResult<S> {
    pub k: usize,
    pub decision: Decision<S>,
    /// Verified split when FEASIBLE; the best candidate otherwise.
    pub allocation: Option<AllocationSolution<S>>,
}

impl<S: Scalar> CollectiveResult<S> {
    pub fn status(&self) -> Status {
        self.decision.status
    }
}

pub const DEFAULT_SHARE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveOptions<S> {
    pub tol_accept: S,
    pub tol_reject: S,
    pub solver: SolveOptions<S>,
    /// Extra solves from random split starts when a run stays undecided.
    pub attempts: usize,
    /// Smallest share of an aggregate quantity a consumer may take.
    pub share_floor: S,
}

impl<S: Scalar> Default for CollectiveOptions<S> {
    fn default() -> Self {
        Self {
            tol_accept: S::lit(DEFAULT_TOL_ACCEPT),
            tol_reject: S::lit(DEFAULT_TOL_REJECT),
            // Fresh random splits explore better than the solver's own
            // perturbations of a single start.
            solver: SolveOptions {
                restarts: 0,
                ..SolveOptions::default()
            },
            attempts: 60,
            share_floor: S::lit(DEFAULT_SHARE_FLOOR),
        }
    }
}

pub fn check_collective<S: Scalar>(
    stats: &MarketStatistics<S>,
    k: usize,
    tol_accept: S,
    tol_reject: S,
) -> Result<CollectiveResult<S>> {
    check_collective_with(
        stats,
        k,
        &CollectiveOptions {
            tol_accept,
            tol_reject,
            ..CollectiveOptions::default()
        },
    )
}

fn harp_tol<S: Scalar>() -> S {
    S::lit(harp::DEFAULT_TOL).max(S::epsilon() * S::lit(100.0))
}

pub fn check_collective_with<S: Scalar>(
    stats: &MarketStatistics<S>,
    k: usize,
    opts: &CollectiveOptions<S>,
) -> Result<CollectiveResult<S>> {
    let (accept, reject) = (opts.tol_accept, opts.tol_reject);
    if !(accept > S::zero() && accept < reject && reject <= S::lit(1e-2)) {
        return Err(Error::InvalidParameter(
            "tolerances must satisfy 0 < accept < reject <= 1e-2".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one consumer".into()));
    }
    let (periods, goods) = (stats.periods(), stats.goods());
    if k == 1 {
        let h = harp::check_harp(stats, harp_tol())?;
        let allocation = h.certificate.map(|c| AllocationSolution {
            k: 1,
            sub_quantities: vec![stats.quantities().to_vec()],
            sub_lambdas: vec![c.lambdas],
            residuals: vec![vec![S::zero(); goods]; periods],
        });
        return Ok(CollectiveResult {
            k,
            decision: h.decision,
            allocation,
        });
    }

    let mut program = build_collective_program(stats, k)?;
    if opts.share_floor > S::zero() {
        add_share_floor(&mut program, stats, k, opts.share_floor);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.solver.seed);
    let mut best: Option<CollectiveResult<S>> = None;
    for attempt in 0..=opts.attempts {
        if attempt > 0 {
            random_split_start(&mut program, stats, k, &mut rng);
        }
        // Every run that starts the barrier at a small weight is pulled to
        // the analytic center first, which is symmetric across consumers and
        // often a stall point. Retries start with a heavy objective weight so
        // the random split is not washed out.
        let mut run = opts.clone();
        if attempt > 0 {
            let exp = 3 + (attempt as i32 - 1) % 3;
            run.solver.t_init = opts.solver.t_init * S::lit(10f64.powi(exp));
        }
        let r = attempt_split(stats, k, &program, &run)?;
        if r.status() != Status::Undecided {
            return Ok(r);
        }
        let better = match &best {
            None => true,
            Some(b) => r.decision.optimum < b.decision.optimum,
        };
        if better {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one attempt"))
}

/// Starts every consumer at a random share of each aggregate bundle, the
/// shares of one good summing to one half.
fn random_split_start<S: Scalar>(program: &mut LogConvexProgram<S>, stats: &MarketStatistics<S>, k: usize, rng: &mut ChaCha8Rng) {
    let (periods, goods) = (stats.periods(), stats.goods());
    let base = k * periods;
    for t in 0..periods {
        for i in 0..goods {
            let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.02..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (alpha, w) in weights.iter().enumerate() {
                let share = S::lit(0.5 * w / total);
                program.set_start(base + (alpha * periods + t) * goods + i, (share * stats.quantity(t)[i]).ln());
            }
        }
    }
}

fn attempt_split<S: Scalar>(
    stats: &MarketStatistics<S>,
    k: usize,
    program: &LogConvexProgram<S>,
    opts: &CollectiveOptions<S>,
) -> Result<CollectiveResult<S>> {
    let (accept, reject) = (opts.tol_accept, opts.tol_reject);
    let solved = convex::solve(program, &opts.solver);
    let optimum = solved.objective;
    if solved.status == Status::Infeasible {
        return Ok(CollectiveResult {
            k,
            decision: Decision::infeasible(solved.detail).with_optimum(optimum),
            allocation: None,
        });
    }
    let alloc = extract_allocation(stats, k, &solved.point)?;
    let guard = alloc
        .residuals
        .iter()
        .enumerate()
        .all(|(t, row)| row.iter().zip(stats.quantity(t)).all(|(&g, &q)| g <= accept * q));
    let verified = verify_allocation(stats, &alloc, accept);
    let decision = if optimum <= accept && guard && verified {
        Decision::feasible(format!("residual total {optimum:.3e}, split verified"))
    } else if optimum <= accept && !guard {
        Decision::undecided("small total residual but a single residual is too large")
    } else if optimum <= accept {
        Decision::undecided("residual is zero but the split fails re-verification")
    } else if optimum >= reject {
        Decision::undecided(format!(
            "solver stopped at residual {optimum:.3e} without an infeasibility certificate"
        ))
    } else {
        Decision::undecided(format!("residual {optimum:.3e} inside the undecided band"))
    }
    .with_optimum(optimum);
    Ok(CollectiveResult {
        k,
        decision,
        allocation: Some(alloc),
    })
}

/// Reads the split off a solver point. Residuals are recomputed from the
/// balance, and each consumer's multipliers come from the exact HARP test
/// on its bundle when that succeeds.
fn extract_allocation<S: Scalar>(stats: &MarketStatistics<S>, k: usize, x: &[S]) -> Result<AllocationSolution<S>> {
    let (periods, goods) = (stats.periods(), stats.goods());
    let base = k * periods;
    let sub_quantities: Vec<Vec<Vec<S>>> = (0..k)
        .map(|alpha| {
            (0..periods)
                .map(|t| {
                    (0..goods)
                        .map(|i| x[base + (alpha * periods + t) * goods + i].exp())
                        .collect()
                })
                .collect()
        })
        .collect();
    let residuals = (0..periods)
        .map(|t| {
            (0..goods)
                .map(|i| {
                    let used: S = sub_quantities.iter().map(|q| q[t][i]).sum();
                    stats.quantity(t)[i] - used
                })
                .collect()
        })
        .collect();
    let mut sub_lambdas = Vec::with_capacity(k);
    for (alpha, q) in sub_quantities.iter().enumerate() {
        let own = stats.with_quantities(q.clone())?;
        let exact = harp::check_harp(&own, harp_tol())?;
        let lambdas = match exact.certificate {
            Some(c) if exact.status() == Status::Feasible => c.lambdas,
            _ => normalize_from_logs(&x[alpha * periods..(alpha + 1) * periods]),
        };
        sub_lambdas.push(lambdas);
    }
    Ok(AllocationSolution {
        k,
        sub_quantities,
        sub_lambdas,
        residuals,
    })
}

/// Balance `Σ_alpha q + gamma = Q` with `gamma >= 0` and the Afriat
/// inequalities of every consumer, each within relative `tol`.
pub fn verify_allocation<S: Scalar>(stats: &MarketStatistics<S>, alloc: &AllocationSolution<S>, tol: S) -> bool {
    let (periods, goods) = (stats.periods(), stats.goods());
    let k = alloc.k;
    let shaped = k >= 1
        && alloc.sub_quantities.len() == k
        && alloc.sub_lambdas.len() == k
        && alloc.residuals.len() == periods
        && alloc.residuals.iter().all(|r| r.len() == goods)
        && alloc.sub_lambdas.iter().all(|l| l.len() == periods)
        && alloc
            .sub_quantities
            .iter()
            .all(|q| q.len() == periods && q.iter().all(|row| row.len() == goods));
    if !shaped {
        return false;
    }
    for t in 0..periods {
        for i in 0..goods {
            let total = stats.quantity(t)[i];
            let gamma = alloc.residuals[t][i];
            let used: S = alloc.sub_quantities.iter().map(|q| q[t][i]).sum();
            if gamma < -tol * total || (used + gamma - total).abs() > tol * total {
                return false;
            }
        }
    }
    alloc.sub_quantities.iter().zip(&alloc.sub_lambdas).all(|(q, l)| {
        if q.iter().flatten().any(|&v| !(v > S::zero()) || !v.is_finite()) {
            return false;
        }
        if l.iter().any(|&v| !(v > S::zero()) || !v.is_finite()) {
            return false;
        }
        let Ok(own) = stats.with_quantities(q.clone()) else {
            return false;
        };
        let total: S = l.iter().copied().sum();
        let cert = AfriatCertificate {
            lambdas: l.iter().map(|&v| v / total).collect(),
        };
        harp::verify_certificate(&own, &cert, tol)
    })
}

/// Splits the first consumer's bundles in half between two consumers with
/// the same multipliers, giving a `k + 1` split of the same aggregate.
pub fn extend_by_split<S: Scalar>(alloc: &AllocationSolution<S>) -> AllocationSolution<S> {
    let half = S::lit(0.5);
    let halved: Vec<Vec<S>> = alloc.sub_quantities[0]
        .iter()
        .map(|row| row.iter().map(|&v| v * half).collect())
        .collect();
    let mut sub_quantities = vec![halved.clone(), halved];
    sub_quantities.extend(alloc.sub_quantities[1..].iter().cloned());
    let mut sub_lambdas = vec![alloc.sub_lambdas[0].clone()];
    sub_lambdas.extend(alloc.sub_lambdas.iter().cloned());
    AllocationSolution {
        k: alloc.k + 1,
        sub_quantities,
        sub_lambdas,
        residuals: alloc.residuals.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassNumber {
    Exact(usize),
    /// Some `k` below `upper` stayed undecided; `lower` is the first of them.
    LowerBoundOnly { lower: usize, upper: usize },
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ClassNumberResult<S> {
    pub value: ClassNumber,
    pub per_k: BTreeMap<usize, Decision<S>>,
    pub witness: Option<AllocationSolution<S>>,
}

/// Tries `k = 1, 2, ..., k_max` until one is FEASIBLE.
pub fn class_number<S: Scalar>(
    stats: &MarketStatistics<S>,
    k_max: usize,
    opts: &CollectiveOptions<S>,
) -> Result<ClassNumberResult<S>> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let mut per_k = BTreeMap::new();
    let mut first_undecided = None;
    for k in 1..=k_max {
        let r = check_collective_with(stats, k, opts)?;
        let status = r.status();
        per_k.insert(k, r.decision);
        match status {
            Status::Feasible => {
                let value = match first_undecided {
                    Some(lower) => ClassNumber::LowerBoundOnly { lower, upper: k },
                    None => ClassNumber::Exact(k),
                };
                return Ok(ClassNumberResult {
                    value,
                    per_k,
                    witness: r.allocation,
                });
            }
            Status::Undecided => {
                first_undecided.get_or_insert(k);
            }
            Status::Infeasible => {}
        }
    }
    Ok(ClassNumberResult {
        value: ClassNumber::NotFound,
        per_k,
        witness: None,
    })
}

/// `f_alpha(q^t) = lambda_t p^t·q^t` for the utility recovered from one
/// consumer's share of a verified split.
pub fn consumer_utility_consistent<S: Scalar>(
    stats: &MarketStatistics<S>,
    alloc: &AllocationSolution<S>,
    alpha: usize,
    tol: S,
) -> Result<bool> {
    let own = alloc.consumer_stats(stats.prices(), alpha)?;
    let cert = AfriatCertificate::normalized(&alloc.sub_lambdas[alpha]);
    let f = harp::recover_utility_with_tol(&cert, &own, tol)?;
    Ok((0..own.periods()).all(|t| {
        let expected = cert.lambdas[t] * dot(own.price(t), own.quantity(t));
        (f.value(own.quantity(t)) - expected).abs() <= tol * expected
    }))
}
