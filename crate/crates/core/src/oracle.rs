//! Brute-force deciders for tiny instances.
//!
//! Each oracle scans a fixed grid for a point satisfying the inequalities
//! directly and, failing that, looks for an exact short cycle whose product
//! of expenditure ratios falls clearly below one. The separability oracle
//! grids only `lambda` and settles `mu` by enumerating cycles. Nothing here touches the
//! graph or convex machinery, so the two can be checked against each other.
//! Scans run in lexicographic order, so the reported witness is the smallest
//! passing grid point.

use crate::error::{Error, Result};
use crate::model::{Decision, MarketStatistics, PartitionedStatistics};
use crate::scalar::Scalar;

pub const DEFAULT_GRID_TOL: f64 = 1e-6;
/// Points per dimension for one or two free dimensions.
pub const FINE_RESOLUTION: usize = 200;
/// Points per dimension for three or four free dimensions.
pub const COARSE_RESOLUTION: usize = 40;

pub const HARP_MAX_PERIODS: usize = 4;
pub const SEPARABILITY_MAX_PERIODS: usize = 3;
pub const COLLECTIVE_MAX_PERIODS: usize = 2;
pub const COLLECTIVE_MAX_GOODS: usize = 2;
pub const COLLECTIVE_MAX_CONSUMERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<S> {
    /// Points per dimension; `None` picks by the number of free dimensions.
    pub resolution: Option<usize>,
    /// Relative slack allowed on every inequality at a grid point.
    pub tolerance: S,
}

impl<S: Scalar> Default for GridSpec<S> {
    fn default() -> Self {
        Self {
            resolution: None,
            tolerance: S::lit(DEFAULT_GRID_TOL),
        }
    }
}

impl<S: Scalar> GridSpec<S> {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution: Some(resolution),
            ..Self::default()
        }
    }

    fn points(&self, free_dims: usize) -> Result<usize> {
        let r = self.resolution.unwrap_or(if free_dims <= 2 {
            FINE_RESOLUTION
        } else {
            COARSE_RESOLUTION
        });
        if r < 2 {
            return Err(Error::InvalidParameter("grid resolution must be at least 2".into()));
        }
        if !(self.tolerance >= S::zero() && self.tolerance < S::lit(0.1)) {
            return Err(Error::InvalidParameter("grid tolerance must lie in [0, 0.1)".into()));
        }
        Ok(r)
    }
}

fn inner<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `c[tau][t] = p^tau · q^t`.
fn cross_costs<S: Scalar>(prices: &[Vec<S>], quantities: &[Vec<S>]) -> Vec<Vec<S>> {
    prices
        .iter()
        .map(|p| quantities.iter().map(|q| inner(p, q)).collect())
        .collect()
}

/// Afriat inequalities `lambda_t c_tt <= lambda_tau c_tau,t` with slack.
fn afriat_holds<S: Scalar>(c: &[Vec<S>], lambdas: &[S], slack: S) -> bool {
    let n = lambdas.len();
    (0..n).all(|t| (0..n).all(|tau| lambdas[t] * c[t][t] <= lambdas[tau] * c[tau][t] * slack))
}

/// Smallest product of `c[next][cur] / c[cur][cur]` over all 2- and 3-cycles,
/// with the cycle achieving it.
fn worst_short_cycle<S: Scalar>(c: &[Vec<S>]) -> Option<(S, Vec<usize>)> {
    let n = c.len();
    let step = |from: usize, to: usize| c[to][from] / c[from][from];
    let mut best: Option<(S, Vec<usize>)> = None;
    let mut offer = |ratio: S, cycle: Vec<usize>| {
        if best.as_ref().is_none_or(|(b, _)| ratio < *b) {
            best = Some((ratio, cycle));
        }
    };
    for a in 0..n {
        for b in a + 1..n {
            offer(step(a, b) * step(b, a), vec![a, b]);
            for d in b + 1..n {
                offer(step(a, b) * step(b, d) * step(d, a), vec![a, b, d]);
                offer(step(a, d) * step(d, b) * step(b, a), vec![a, d, b]);
            }
        }
    }
    best
}

/// Potentials `m` with `m_t - m_tau <= w[tau][t]` for `T <= 3`, or `None`
/// when a 2- or 3-cycle has negative total weight. Each `m_v` is the
/// lightest simple path ending at `v` (zero for the empty path); the result
/// is `exp(m)` scaled so its largest entry is one.
fn mu_potentials<S: Scalar>(w: &[Vec<S>]) -> Option<Vec<S>> {
    let n = w.len();
    let zero = S::zero();
    for a in 0..n {
        for b in a + 1..n {
            if w[a][b] + w[b][a] < zero {
                return None;
            }
            for d in b + 1..n {
                if w[a][b] + w[b][d] + w[d][a] < zero || w[a][d] + w[d][b] + w[b][a] < zero {
                    return None;
                }
            }
        }
    }
    let logs: Vec<S> = (0..n)
        .map(|v| {
            let mut best = zero;
            for u in (0..n).filter(|&u| u != v) {
                best = best.min(w[u][v]);
                for m in (0..n).filter(|&m| m != u && m != v) {
                    best = best.min(w[u][m] + w[m][v]);
                }
            }
            best
        })
        .collect();
    let top = logs.iter().copied().fold(S::neg_infinity(), S::max);
    Some(logs.iter().map(|&l| (l - top).exp()).collect())
}

fn format_point<S: Scalar>(v: &[S]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.6}", x.as_f64())).collect();
    format!("({})", parts.join(", "))
}

fn format_cycle(cycle: &[usize]) -> String {
    let parts: Vec<String> = cycle.iter().chain(cycle.first()).map(|t| (t + 1).to_string()).collect();
    parts.join(" -> ")
}

/// Calls `visit` on every interior point of the simplex grid with step
/// `1/r`, in lexicographic order of the integer coordinates, until it
/// returns true.
fn scan_simplex<S: Scalar>(dims: usize, r: usize, visit: &mut dyn FnMut(&[S]) -> bool) -> bool {
    if dims == 1 {
        return visit(&[S::one()]);
    }
    if r < dims {
        return false;
    }
    let scale = S::count(r);
    let mut counts = vec![1usize; dims];
    let mut point = vec![S::zero(); dims];
    fn rec<S: Scalar>(
        i: usize,
        left: usize,
        scale: S,
        counts: &mut [usize],
        point: &mut [S],
        visit: &mut dyn FnMut(&[S]) -> bool,
    ) -> bool {
        let dims = counts.len();
        if i == dims - 1 {
            counts[i] = left;
            point[i] = S::count(left) / scale;
            return visit(point);
        }
        let remaining = dims - 1 - i;
        for c in 1..=left - remaining {
            counts[i] = c;
            point[i] = S::count(c) / scale;
            if rec(i + 1, left - c, scale, counts, point, visit) {
                return true;
            }
        }
        false
    }
    rec(0, r, scale, &mut counts, &mut point, visit)
}

/// Calls `visit` on every index vector in `0..r` of length `dims`, last
/// coordinate fastest, until it returns true.
fn scan_box(dims: usize, r: usize, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    let mut idx = vec![0usize; dims];
    loop {
        if visit(&idx) {
            return true;
        }
        let mut d = dims;
        loop {
            if d == 0 {
                return false;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < r {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Grid search for Afriat multipliers, `T <= 4`.
pub fn oracle_harp<S: Scalar>(stats: &MarketStatistics<S>, grid: &GridSpec<S>) -> Result<Decision<S>> {
    let periods = stats.periods();
    if periods > HARP_MAX_PERIODS {
        return Err(Error::SizeLimit(format!(
            "harp oracle handles at most {HARP_MAX_PERIODS} periods, got {periods}"
        )));
    }
    let r = grid.points(periods - 1)?;
    let c = cross_costs(stats.prices(), stats.quantities());
    let slack = S::one() + grid.tolerance;
    let mut witness = None;
    scan_simplex(periods, r, &mut |lambdas: &[S]| {
        let ok = afriat_holds(&c, lambdas, slack);
        if ok {
            witness = Some(lambdas.to_vec());
        }
        ok
    });
    if let Some(l) = witness {
        return Ok(Decision::feasible(format!("grid multipliers {}", format_point(&l))));
    }
    Ok(cycle_decision(&c, grid.tolerance, "cycle"))
}

fn cycle_decision<S: Scalar>(c: &[Vec<S>], tol: S, label: &str) -> Decision<S> {
    match worst_short_cycle(c) {
        Some((ratio, cycle)) if ratio < S::one() - S::lit(10.0) * tol => Decision::infeasible(format!(
            "{label} {} has ratio {}",
            format_cycle(&cycle),
            ratio
        ))
        .with_optimum(ratio),
        _ => Decision::undecided("no grid point passes and no short cycle is clearly violated"),
    }
}

/// Grid search over `lambda` for the separability system, `T <= 3`. For a
/// fixed `lambda` the `mu` inequalities are difference constraints in
/// `log mu`, decided exactly by their 2- and 3-cycles.
pub fn oracle_separability<S: Scalar>(
    part: &PartitionedStatistics<S>,
    grid: &GridSpec<S>,
) -> Result<Decision<S>> {
    let periods = part.periods();
    if periods > SEPARABILITY_MAX_PERIODS {
        return Err(Error::SizeLimit(format!(
            "separability oracle handles at most {SEPARABILITY_MAX_PERIODS} periods, got {periods}"
        )));
    }
    let r = grid.points(periods - 1)?;
    let (q, y) = (part.q_stats(), part.y_stats());
    let xy = cross_costs(y.prices(), y.quantities());
    let pq = cross_costs(q.prices(), q.quantities());
    let spend: Vec<S> = (0..periods).map(|t| pq[t][t] + xy[t][t]).collect();
    let slack = S::one() + grid.tolerance;

    let mut witness = None;
    scan_simplex(periods, r, &mut |lambdas: &[S]| {
        if !afriat_holds(&xy, lambdas, slack) {
            return false;
        }
        // mu_t a[t][tau] <= mu_tau b[t][tau], i.e. log mu_t - log mu_tau <= w[tau][t].
        let w: Vec<Vec<S>> = (0..periods)
            .map(|tau| {
                (0..periods)
                    .map(|t| {
                        let a = lambdas[tau] * spend[t];
                        let b = (lambdas[tau] * pq[tau][t] + lambdas[t] * xy[t][t]) * slack;
                        (b / a).ln()
                    })
                    .collect()
            })
            .collect();
        match mu_potentials(&w) {
            Some(mus) => {
                witness = Some((lambdas.to_vec(), mus));
                true
            }
            None => false,
        }
    });
    if let Some((l, m)) = witness {
        return Ok(Decision::feasible(format!(
            "grid multipliers lambda {} mu {}",
            format_point(&l),
            format_point(&m)
        )));
    }
    let decision = cycle_decision(&xy, grid.tolerance, "y-block cycle");
    if decision.is_infeasible() {
        return Ok(decision);
    }
    // The whole bundle must pass the homogeneous test too.
    let full = cross_costs(part.base().prices(), part.base().quantities());
    let whole = cycle_decision(&full, grid.tolerance, "full-data cycle");
    if whole.is_infeasible() {
        return Ok(whole);
    }
    Ok(decision)
}

/// Grid search over two-consumer splits, `T <= 2`, `n <= 2`.
pub fn oracle_collective<S: Scalar>(
    stats: &MarketStatistics<S>,
    k: usize,
    grid: &GridSpec<S>,
) -> Result<Decision<S>> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one consumer".into()));
    }
    if k == 1 {
        return oracle_harp(stats, grid);
    }
    let (periods, goods) = (stats.periods(), stats.goods());
    if k > COLLECTIVE_MAX_CONSUMERS || periods > COLLECTIVE_MAX_PERIODS || goods > COLLECTIVE_MAX_GOODS {
        return Err(Error::SizeLimit(format!(
            "collective oracle handles k <= {COLLECTIVE_MAX_CONSUMERS}, T <= {COLLECTIVE_MAX_PERIODS}, \
             n <= {COLLECTIVE_MAX_GOODS}; got k={k}, T={periods}, n={goods}"
        )));
    }
    let cells = periods * goods;
    let r = grid.points(cells)?;
    if periods == 1 {
        return Ok(Decision::feasible("a single period is always rationalizable"));
    }
    // Fractions `j / r` for `j = 1..r-1`, strictly inside (0, 1).
    let scale = S::count(r);
    let slack = (S::one() + grid.tolerance).powi(2);
    let prices = stats.prices();
    let passes = |bundles: &[Vec<S>]| {
        let c = cross_costs(prices, bundles);
        c[1][0] * c[0][1] * slack >= c[0][0] * c[1][1]
    };
    let mut witness = None;
    let mut first = vec![vec![S::zero(); goods]; periods];
    let mut second = first.clone();
    scan_box(cells, r - 1, &mut |idx: &[usize]| {
        for (cell, &j) in idx.iter().enumerate() {
            let (t, i) = (cell / goods, cell % goods);
            let f = S::count(j + 1) / scale;
            let total = stats.quantity(t)[i];
            first[t][i] = f * total;
            second[t][i] = (S::one() - f) * total;
        }
        let ok = passes(&first) && passes(&second);
        if ok {
            witness = Some(idx.iter().map(|&j| S::count(j + 1) / scale).collect::<Vec<S>>());
        }
        ok
    });
    Ok(match witness {
        Some(f) => Decision::feasible(format!("first consumer takes fractions {}", format_point(&f))),
        None => Decision::undecided("no grid split passes"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{partition, Status};

    fn feasible_pair() -> MarketStatistics<f64> {
        MarketStatistics::new(
            vec![vec![1.0, 1.0], vec![2.0, 1.0]],
            vec![vec![0.5, 0.5], vec![0.25, 0.5]],
        )
        .unwrap()
    }

    fn infeasible_pair() -> MarketStatistics<f64> {
        MarketStatistics::new(
            vec![vec![1.0, 1.0], vec![2.0, 1.0]],
            vec![vec![0.25, 0.5], vec![0.5, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn simplex_grid_is_lexicographic_and_interior() {
        let mut seen = Vec::new();
        scan_simplex::<f64>(3, 4, &mut |p| {
            seen.push(p.iter().map(|v| (v * 4.0).round() as usize).collect::<Vec<_>>());
            false
        });
        assert_eq!(seen, vec![vec![1, 1, 2], vec![1, 2, 1], vec![2, 1, 1]]);
    }

    #[test]
    fn box_grid_counts() {
        let mut n = 0;
        scan_box(3, 4, &mut |_| {
            n += 1;
            false
        });
        assert_eq!(n, 64);
    }

    #[test]
    fn harp_feasible_pair() {
        let d = oracle_harp(&feasible_pair(), &GridSpec::default()).unwrap();
        assert_eq!(d.status, Status::Feasible);
        // Feasible multipliers have lambda_1 in [4/7, 3/5].
        assert!(d.detail.contains("0.57"), "{}", d.detail);
    }

    #[test]
    fn harp_infeasible_pair() {
        let d = oracle_harp(&infeasible_pair(), &GridSpec::default()).unwrap();
        assert_eq!(d.status, Status::Infeasible);
        assert!((d.optimum.unwrap() - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn harp_single_period_and_size_limit() {
        let one = MarketStatistics::new(vec![vec![1.0, 2.0]], vec![vec![3.0, 4.0]]).unwrap();
        assert!(oracle_harp(&one, &GridSpec::default()).unwrap().is_feasible());
        let five = MarketStatistics::new(vec![vec![1.0]; 5], vec![vec![1.0]; 5]).unwrap();
        assert!(matches!(oracle_harp(&five, &GridSpec::default()), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn harp_three_cycle() {
        // Every 2-cycle passes; one 3-cycle has ratio about 0.886.
        let s = MarketStatistics::new(
            vec![vec![1.6, 2.5, 3.0], vec![2.1, 1.2, 0.9], vec![1.3, 2.5, 1.3]],
            vec![vec![1.8, 1.6, 2.7], vec![1.2, 2.7, 1.7], vec![0.5, 0.9, 2.3]],
        )
        .unwrap();
        let d = oracle_harp(&s, &GridSpec::default()).unwrap();
        assert_eq!(d.status, Status::Infeasible);
        assert!((d.optimum.unwrap() - 0.8856555_f64).abs() < 1e-6);
        assert_eq!(d.detail.matches("->").count(), 3);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(oracle_harp(&feasible_pair(), &GridSpec::with_resolution(1)).is_err());
    }

    fn embed_y(y_prices: &[[f64; 2]; 2], y_quant: &[[f64; 2]; 2]) -> PartitionedStatistics<f64> {
        let prices = vec![
            vec![1.0, 2.0, y_prices[0][0], y_prices[0][1]],
            vec![1.5, 1.0, y_prices[1][0], y_prices[1][1]],
        ];
        let quantities = vec![
            vec![0.3, 0.2, y_quant[0][0], y_quant[0][1]],
            vec![0.1, 0.4, y_quant[1][0], y_quant[1][1]],
        ];
        partition(&MarketStatistics::new(prices, quantities).unwrap(), &[2, 3]).unwrap()
    }

    #[test]
    fn separability_rejects_bad_y_block() {
        let part = embed_y(&[[1.0, 1.0], [2.0, 1.0]], &[[0.25, 0.5], [0.5, 0.5]]);
        let d = oracle_separability(&part, &GridSpec::default()).unwrap();
        assert_eq!(d.status, Status::Infeasible);
        assert!(d.detail.contains("y-block"));
    }

    #[test]
    fn separability_single_period() {
        let s = MarketStatistics::new(vec![vec![1.0, 2.0]], vec![vec![3.0, 4.0]]).unwrap();
        let part = partition(&s, &[1]).unwrap();
        assert!(oracle_separability(&part, &GridSpec::default()).unwrap().is_feasible());
    }

    #[test]
    fn collective_single_consumer_delegates() {
        let g = GridSpec::default();
        assert_eq!(
            oracle_collective(&infeasible_pair(), 1, &g).unwrap(),
            oracle_harp(&infeasible_pair(), &g).unwrap()
        );
    }

    #[test]
    fn collective_two_consumers_split_the_bad_pair() {
        let d = oracle_collective(&infeasible_pair(), 2, &GridSpec::default()).unwrap();
        assert_eq!(d.status, Status::Feasible, "{}", d.detail);
    }

    #[test]
    fn collective_size_limit() {
        let s = MarketStatistics::new(vec![vec![1.0; 3]; 2], vec![vec![1.0; 3]; 2]).unwrap();
        assert!(matches!(
            oracle_collective(&s, 2, &GridSpec::default()),
            Err(Error::SizeLimit(_))
        ));
        assert!(oracle_collective(&s, 0, &GridSpec::default()).is_err());
    }
}
