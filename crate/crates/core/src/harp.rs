//! Exact homogeneous Afriat test.
//!
//! The statistics are PH-rationalizable iff there are `lambda_t > 0` with
//! `lambda_t p^t·q^t <= lambda_tau p^tau·q^t` for all pairs. In logs these are
//! difference constraints `l_t - l_tau <= w(tau, t)` with
//! `w(tau, t) = log(p^tau·q^t) - log(p^t·q^t)`, which are consistent iff the
//! complete graph carrying `w` has no negative cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Decision, MarketStatistics, Status};
use crate::scalar::{le_rel, normalize_from_logs, Scalar};
use crate::utility::PiecewiseLinearUtility;

pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_TOL: f64 = 1e-2;

/// Normalized Afriat multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct AfriatCertificate<S> {
    pub lambdas: Vec<S>,
}

impl<S: Scalar> AfriatCertificate<S> {
    /// Rescales positive multipliers so they sum to one.
    pub fn normalized(lambdas: &[S]) -> Self {
        let total: S = lambdas.iter().copied().sum();
        Self {
            lambdas: lambdas.iter().map(|&l| l / total).collect(),
        }
    }
}

/// A cycle `t_1 -> t_2 -> ... -> t_m -> t_1` of periods whose cross-expenditure
/// ratios multiply to less than one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ViolationCycle<S> {
    /// Distinct 0-based periods; the closing edge back to the first is implied.
    pub periods: Vec<usize>,
    pub log_weight: S,
    pub cycle_ratio: S,
}

/// Complete digraph over periods; `weight(tau, t)` is the log-cost of moving
/// bundle `q^t` to prices `p^tau` relative to its own prices.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGraph<S> {
    weights: Vec<Vec<S>>,
}

impl<S: Scalar> CrossGraph<S> {
    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    /// Weight of edge `tau -> t`; zero on the diagonal, which carries no edge.
    pub fn weight(&self, tau: usize, t: usize) -> S {
        self.weights[tau][t]
    }

    /// Edges in `(tau, t)` lexicographic order, self-loops omitted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        let n = self.nodes();
        (0..n).flat_map(move |tau| {
            (0..n)
                .filter(move |&t| t != tau)
                .map(move |t| (tau, t, self.weights[tau][t]))
        })
    }
}

impl<S: Scalar> CrossGraph<S> {
    /// Graph with arbitrary edge weights; the diagonal is ignored.
    pub(crate) fn from_weights(weights: Vec<Vec<S>>) -> Self {
        Self { weights }
    }
}

/// Solves `d[t] <= d[tau] + weight(tau, t)` for all edges, or `None` when a
/// negative cycle makes the system inconsistent.
pub(crate) fn potentials<S: Scalar>(graph: &CrossGraph<S>) -> Option<Vec<S>> {
    match shortest_paths(graph, S::zero()) {
        ShortestPaths::Potentials(d) => Some(d),
        ShortestPaths::NegativeCycle(_) => None,
    }
}

pub fn build_cross_graph<S: Scalar>(stats: &MarketStatistics<S>) -> CrossGraph<S> {
    let n = stats.periods();
    let own: Vec<S> = (0..n).map(|t| stats.expenditure(t).ln()).collect();
    let weights = (0..n)
        .map(|tau| {
            (0..n)
                .map(|t| {
                    if t == tau {
                        S::zero()
                    } else {
                        stats.cost(tau, t).ln() - own[t]
                    }
                })
                .collect()
        })
        .collect();
    CrossGraph { weights }
}

enum ShortestPaths<S> {
    Potentials(Vec<S>),
    NegativeCycle(Vec<usize>),
}

/// Label-correcting sweep from a virtual source joined to every node by a
/// zero edge; every edge weight is increased by `shift`. Only strict
/// improvements relabel, so ties keep the earlier (lower-index) label.
fn shortest_paths<S: Scalar>(graph: &CrossGraph<S>, shift: S) -> ShortestPaths<S> {
    let n = graph.nodes();
    let mut dist = vec![S::zero(); n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut last_updated = None;
    for _pass in 0..=n {
        last_updated = None;
        for (tau, t, w) in graph.edges() {
            let candidate = dist[tau] + w + shift;
            if candidate < dist[t] {
                dist[t] = candidate;
                pred[t] = Some(tau);
                last_updated = Some(t);
            }
        }
        if last_updated.is_none() {
            return ShortestPaths::Potentials(dist);
        }
    }
    // Still relaxing after n + 1 passes: walking back n steps lands on a cycle.
    let mut v = last_updated.expect("relaxation happened");
    for _ in 0..n {
        v = pred[v].expect("relaxed nodes have predecessors");
    }
    let mut cycle = vec![v];
    let mut u = pred[v].expect("cycle node has predecessor");
    while u != v {
        cycle.push(u);
        u = pred[u].expect("cycle node has predecessor");
    }
    cycle.reverse();
    let start = cycle
        .iter()
        .enumerate()
        .min_by_key(|(_, &p)| p)
        .map(|(i, _)| i)
        .unwrap_or(0);
    cycle.rotate_left(start);
    ShortestPaths::NegativeCycle(cycle)
}

/// Evaluates a period cycle exactly from the inner products.
pub fn violation_cycle<S: Scalar>(stats: &MarketStatistics<S>, periods: &[usize]) -> ViolationCycle<S> {
    let m = periods.len();
    let mut ratio = S::one();
    let mut log_weight = S::zero();
    for i in 0..m {
        let from = periods[i];
        let to = periods[(i + 1) % m];
        let r = stats.cost(from, to) / stats.expenditure(to);
        ratio = ratio * r;
        log_weight = log_weight + r.ln();
    }
    ViolationCycle {
        periods: periods.to_vec(),
        log_weight,
        cycle_ratio: ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct HarpResult<S> {
    pub decision: Decision<S>,
    pub certificate: Option<AfriatCertificate<S>>,
    pub cycle: Option<ViolationCycle<S>>,
}

impl<S: Scalar> HarpResult<S> {
    pub fn status(&self) -> Status {
        self.decision.status
    }
}

/// Decides the homogeneous Afriat system.
///
/// `FEASIBLE` ships normalized multipliers from shortest-path potentials.
/// `INFEASIBLE` ships a cycle with ratio below `1 - tol`: such a cycle is
/// found by searching with every edge lengthened by `-log(1 - tol)`.
/// Negative cycles that disappear under that shift are within the
/// numerical boundary and give `UNDECIDED`.
pub fn check_harp<S: Scalar>(stats: &MarketStatistics<S>, tol: S) -> Result<HarpResult<S>> {
    if !(tol > S::zero() && tol <= S::lit(MAX_TOL)) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must lie in (0, {MAX_TOL}]"
        )));
    }
    let graph = build_cross_graph(stats);
    // Data sitting exactly on the boundary (a single good, repeated prices)
    // has zero-weight cycles that rounding can make slightly negative. The
    // first search absorbs that; the certificate is re-verified at `tol`.
    let rounding = S::epsilon() * S::lit(64.0);
    let plain = match shortest_paths(&graph, rounding) {
        ShortestPaths::Potentials(dist) => {
            let cert = AfriatCertificate {
                lambdas: normalize_from_logs(&dist),
            };
            let decision = if verify_certificate(stats, &cert, tol) {
                Decision::feasible("no negative cycle in the cross-expenditure graph")
            } else {
                Decision::undecided("shortest-path multipliers fail re-verification")
            };
            return Ok(HarpResult {
                decision,
                certificate: Some(cert),
                cycle: None,
            });
        }
        ShortestPaths::NegativeCycle(c) => c,
    };
    let shift = -(S::one() - tol).ln();
    let (cycle, decision) = match shortest_paths(&graph, shift) {
        ShortestPaths::NegativeCycle(c) => {
            let cycle = violation_cycle(stats, &c);
            let decision = Decision::infeasible(format!(
                "{}-period cycle with expenditure ratio {}",
                c.len(),
                cycle.cycle_ratio
            ));
            (cycle, decision)
        }
        ShortestPaths::Potentials(_) => {
            let cycle = violation_cycle(stats, &plain);
            let decision = Decision::undecided(format!(
                "negative cycles only within tolerance (ratio {})",
                cycle.cycle_ratio
            ));
            (cycle, decision)
        }
    };
    Ok(HarpResult {
        decision,
        certificate: None,
        cycle: Some(cycle),
    })
}

/// Checks every inequality `lambda_t p^t·q^t <= lambda_tau p^tau·q^t` within
/// relative `tol`, positivity, and the unit-sum normalization within 1e-9.
pub fn verify_certificate<S: Scalar>(
    stats: &MarketStatistics<S>,
    cert: &AfriatCertificate<S>,
    tol: S,
) -> bool {
    let n = stats.periods();
    let lambdas = &cert.lambdas;
    if lambdas.len() != n || lambdas.iter().any(|&l| !(l > S::zero()) || !l.is_finite()) {
        return false;
    }
    let total: S = lambdas.iter().copied().sum();
    if (total - S::one()).abs() > S::lit(1e-9) {
        return false;
    }
    (0..n).all(|t| {
        let lhs = lambdas[t] * stats.expenditure(t);
        (0..n).all(|tau| le_rel(lhs, lambdas[tau] * stats.cost(tau, t), tol))
    })
}

/// `f(x) = min_t lambda_t p^t·x`, verified against `stats` at the default
/// tolerance.
pub fn recover_utility<S: Scalar>(
    cert: &AfriatCertificate<S>,
    stats: &MarketStatistics<S>,
) -> Result<PiecewiseLinearUtility<S>> {
    recover_utility_with_tol(cert, stats, S::lit(DEFAULT_TOL))
}

pub fn recover_utility_with_tol<S: Scalar>(
    cert: &AfriatCertificate<S>,
    stats: &MarketStatistics<S>,
    tol: S,
) -> Result<PiecewiseLinearUtility<S>> {
    if !verify_certificate(stats, cert, tol) {
        return Err(Error::InvalidCertificate);
    }
    PiecewiseLinearUtility::from_multipliers(&cert.lambdas, stats.prices())
}
