//! Cobb-Douglas data with known rationalizations.
//!
//! A Cobb-Douglas consumer with shares `alpha` and budget `m` buys
//! `q_i = alpha_i m / p_i`. Its utility `Π q_i^alpha_i` is PH with price
//! index `nu(p) = Π (p_i / alpha_i)^alpha_i`, so `lambda_t = 1 / nu(p^t)`
//! certifies the data exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collective::AllocationSolution;
use crate::error::{Error, Result};
use crate::model::{partition, MarketStatistics, PartitionedStatistics};
use crate::scalar::Scalar;

pub const DEFAULT_PRICE_RANGE: (f64, f64) = (0.2, 5.0);

/// How much a consumer spends in each period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget<S> {
    Fixed(S),
    /// Drawn log-uniformly from `[lo, hi]` every period.
    LogUniform(S, S),
}

impl<S: Scalar> Budget<S> {
    fn valid(&self) -> bool {
        match *self {
            Budget::Fixed(m) => m > S::zero() && m.is_finite(),
            Budget::LogUniform(lo, hi) => lo > S::zero() && lo <= hi && hi.is_finite(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> S {
        match *self {
            Budget::Fixed(m) => m,
            Budget::LogUniform(lo, hi) => log_uniform(rng, (lo, hi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CobbDouglasSpec<S> {
    /// Budget shares, positive and summing to one.
    pub exponents: Vec<S>,
    pub budget: Budget<S>,
    /// Prices are drawn log-uniformly from `[lo, hi]`.
    pub price_range: (S, S),
    pub seed: u64,
}

impl<S: Scalar> CobbDouglasSpec<S> {
    pub fn new(exponents: Vec<S>, budget: S, seed: u64) -> Self {
        Self {
            exponents,
            budget: Budget::Fixed(budget),
            price_range: (S::lit(DEFAULT_PRICE_RANGE.0), S::lit(DEFAULT_PRICE_RANGE.1)),
            seed,
        }
    }

    /// Uniform shares over `n` goods.
    pub fn uniform(n: usize, budget: S, seed: u64) -> Self {
        Self::new(vec![S::one() / S::count(n); n], budget, seed)
    }

    pub fn goods(&self) -> usize {
        self.exponents.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.exponents.is_empty() {
            return Err(Error::InvalidParameter("no goods".into()));
        }
        if self.exponents.iter().any(|&a| !(a > S::zero())) {
            return Err(Error::InvalidParameter("exponents must be positive".into()));
        }
        let total: S = self.exponents.iter().copied().sum();
        let tol = S::lit(1e-12).max(S::epsilon() * S::count(4 * self.exponents.len()));
        if (total - S::one()).abs() > tol {
            return Err(Error::InvalidParameter("exponents must sum to one".into()));
        }
        if !self.budget.valid() {
            return Err(Error::InvalidParameter("budgets must be positive".into()));
        }
        let (lo, hi) = self.price_range;
        if !(lo > S::zero() && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter("price range must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

fn log_uniform<S: Scalar>(rng: &mut ChaCha8Rng, (lo, hi): (S, S)) -> S {
    let (a, b) = (lo.as_f64().ln(), hi.as_f64().ln());
    if a == b {
        return lo;
    }
    S::lit(rng.gen_range(a..b).exp())
}

fn draw_prices<S: Scalar>(rng: &mut ChaCha8Rng, range: (S, S), periods: usize, goods: usize) -> Vec<Vec<S>> {
    (0..periods)
        .map(|_| (0..goods).map(|_| log_uniform(rng, range)).collect())
        .collect()
}

/// Budget shares drawn uniformly from `[0.05, 1]` and normalized, so no
/// good is negligible.
pub fn random_exponents<S: Scalar>(goods: usize, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..goods).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| S::lit(v / total)).collect()
}

/// `q_i = alpha_i budget / p_i`.
pub fn cobb_douglas_demand<S: Scalar>(exponents: &[S], budget: S, prices: &[S]) -> Vec<S> {
    exponents
        .iter()
        .zip(prices)
        .map(|(&a, &p)| a * budget / p)
        .collect()
}

/// `Π (p_i / alpha_i)^alpha_i`, the cost of one unit of Cobb-Douglas utility.
pub fn price_index<S: Scalar>(exponents: &[S], prices: &[S]) -> S {
    exponents
        .iter()
        .zip(prices)
        .map(|(&a, &p)| a * (p / a).ln())
        .sum::<S>()
        .exp()
}

/// Multipliers `1 / nu(p^t)`, normalized to sum to one.
pub fn cobb_douglas_lambdas<S: Scalar>(exponents: &[S], prices: &[Vec<S>]) -> Vec<S> {
    let raw: Vec<S> = prices.iter().map(|p| S::one() / price_index(exponents, p)).collect();
    let total: S = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn gen_cobb_douglas<S: Scalar>(spec: &CobbDouglasSpec<S>, periods: usize) -> Result<MarketStatistics<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prices = draw_prices(&mut rng, spec.price_range, periods, spec.goods());
    let quantities = prices
        .iter()
        .map(|p| cobb_douglas_demand(&spec.exponents, spec.budget.draw(&mut rng), p))
        .collect();
    MarketStatistics::new(prices, quantities)
}

/// Two-level Cobb-Douglas: share `a` of the budget (drawn from `q_spec`)
/// goes to the `q` goods and `b` to the `y` goods, each split by the inner
/// shares. The `y` goods are the last columns. Prices of each block come
/// from its own spec's range.
pub fn gen_nested_cd<S: Scalar>(
    q_spec: &CobbDouglasSpec<S>,
    y_spec: &CobbDouglasSpec<S>,
    shares: (S, S),
    periods: usize,
    seed: u64,
) -> Result<PartitionedStatistics<S>> {
    q_spec.validate()?;
    y_spec.validate()?;
    let (a, b) = shares;
    if !(a > S::zero() && b > S::zero()) || (a + b - S::one()).abs() > S::lit(1e-12).max(S::epsilon() * S::lit(4.0)) {
        return Err(Error::InvalidParameter("top shares must be positive and sum to one".into()));
    }
    let (k, l) = (q_spec.goods(), y_spec.goods());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prices = Vec::with_capacity(periods);
    let mut quantities = Vec::with_capacity(periods);
    for _ in 0..periods {
        let p: Vec<S> = (0..k).map(|_| log_uniform(&mut rng, q_spec.price_range)).collect();
        let x: Vec<S> = (0..l).map(|_| log_uniform(&mut rng, y_spec.price_range)).collect();
        let m = q_spec.budget.draw(&mut rng);
        let mut q = cobb_douglas_demand(&q_spec.exponents, a * m, &p);
        q.extend(cobb_douglas_demand(&y_spec.exponents, b * m, &x));
        let mut row = p;
        row.extend(x);
        prices.push(row);
        quantities.push(q);
    }
    let stats = MarketStatistics::new(prices, quantities)?;
    let y_block: Vec<usize> = (k..k + l).collect();
    partition(&stats, &y_block)
}

/// Generating multipliers of nested Cobb-Douglas data: `lambda_t` from the
/// inner `y` price index (normalized), `mu_t = 1 / nu0(p^t, nu1(x^t))`
/// scaled so the largest is one.
pub fn nested_cd_multipliers<S: Scalar>(
    q_exponents: &[S],
    y_exponents: &[S],
    shares: (S, S),
    part: &PartitionedStatistics<S>,
) -> (Vec<S>, Vec<S>) {
    let (a, b) = shares;
    let y_prices = part.y_stats().prices();
    let q_prices = part.q_stats().prices();
    let inner: Vec<S> = y_prices.iter().map(|x| price_index(y_exponents, x)).collect();
    let outer_shares: Vec<S> = q_exponents.iter().map(|&e| a * e).chain([b]).collect();
    let raw_mu: Vec<S> = q_prices
        .iter()
        .zip(&inner)
        .map(|(p, &nu1)| {
            let mut outer_prices = p.clone();
            outer_prices.push(nu1);
            S::one() / price_index(&outer_shares, &outer_prices)
        })
        .collect();
    let lambdas = {
        let raw: Vec<S> = inner.iter().map(|&v| S::one() / v).collect();
        let total: S = raw.iter().copied().sum();
        raw.into_iter().map(|v| v / total).collect()
    };
    let top = raw_mu.iter().copied().fold(S::zero(), S::max);
    (lambdas, raw_mu.into_iter().map(|v| v / top).collect())
}

/// Aggregate of `k` Cobb-Douglas consumers facing the same prices, drawn
/// from the first spec's range. Each consumer keeps its own shares and
/// budget law; budgets are drawn after the prices, consumer by consumer.
///
/// With fixed budgets the aggregate is itself Cobb-Douglas (shares weighted
/// by budgets) and so always passes HARP; budgets that move differently
/// across consumers are what make the aggregate need more than one.
pub fn gen_collective<S: Scalar>(
    specs: &[CobbDouglasSpec<S>],
    periods: usize,
    seed: u64,
) -> Result<(MarketStatistics<S>, AllocationSolution<S>)> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one consumer".into()))?;
    let n = first.goods();
    for s in specs {
        s.validate()?;
        if s.goods() != n {
            return Err(Error::Shape("consumers must share the goods".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prices = draw_prices(&mut rng, first.price_range, periods, n);
    let sub_quantities: Vec<Vec<Vec<S>>> = specs
        .iter()
        .map(|s| {
            prices
                .iter()
                .map(|p| cobb_douglas_demand(&s.exponents, s.budget.draw(&mut rng), p))
                .collect()
        })
        .collect();
    let sub_lambdas = specs
        .iter()
        .map(|s| cobb_douglas_lambdas(&s.exponents, &prices))
        .collect();
    let aggregate: Vec<Vec<S>> = (0..periods)
        .map(|t| {
            (0..n)
                .map(|i| sub_quantities.iter().map(|q| q[t][i]).sum())
                .collect()
        })
        .collect();
    let stats = MarketStatistics::new(prices, aggregate)?;
    let witness = AllocationSolution {
        k: specs.len(),
        sub_quantities,
        sub_lambdas,
        residuals: vec![vec![S::zero(); n]; periods],
    };
    Ok((stats, witness))
}

/// Multiplies every quantity by an independent factor in `[1 - noise, 1 + noise]`.
pub fn perturb<S: Scalar>(stats: &MarketStatistics<S>, noise: S, seed: u64) -> Result<MarketStatistics<S>> {
    if !(noise >= S::zero() && noise < S::lit(0.5)) {
        return Err(Error::InvalidParameter("noise must lie in [0, 0.5)".into()));
    }
    if noise == S::zero() {
        return Ok(stats.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = noise.as_f64();
    let quantities = stats
        .quantities()
        .iter()
        .map(|row| {
            row.iter()
                .map(|&q| q * S::lit(1.0 + rng.gen_range(-r..=r)))
                .collect()
        })
        .collect();
    stats.with_quantities(quantities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harp::{check_harp, verify_certificate, AfriatCertificate};
    use crate::model::Status;
    use crate::separability::{verify_separability_solution, SeparabilityInstance};
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_demand() {
        assert_eq!(cobb_douglas_demand(&[0.5, 0.5], 1.0, &[1.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(cobb_douglas_demand(&[0.5, 0.5], 1.0, &[2.0, 1.0]), vec![0.25, 0.5]);
    }

    #[test]
    fn budget_is_exact() {
        let spec = CobbDouglasSpec::new(vec![0.2, 0.3, 0.5], 2.5, 11);
        let s = gen_cobb_douglas(&spec, 20).unwrap();
        for t in 0..20 {
            assert_relative_eq!(s.expenditure(t), 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn drawn_budgets_are_spent_exactly() {
        let spec = CobbDouglasSpec {
            budget: Budget::LogUniform(0.5, 2.0),
            ..CobbDouglasSpec::new(vec![0.4, 0.6], 1.0, 8)
        };
        let s = gen_cobb_douglas(&spec, 10).unwrap();
        let spends: Vec<f64> = (0..10).map(|t| s.expenditure(t)).collect();
        assert!(spends.iter().all(|&m| (0.5..=2.0).contains(&m)));
        assert!(spends.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn generated_data_pass_harp_with_generating_multipliers() {
        let spec = CobbDouglasSpec::new(vec![0.7, 0.1, 0.2], 1.0, 3);
        let s = gen_cobb_douglas(&spec, 15).unwrap();
        assert_eq!(check_harp(&s, 1e-9).unwrap().status(), Status::Feasible);
        let cert = AfriatCertificate {
            lambdas: cobb_douglas_lambdas(&spec.exponents, s.prices()),
        };
        assert!(verify_certificate(&s, &cert, 1e-12));
    }

    #[test]
    fn nested_uniform_example() {
        let q = CobbDouglasSpec::<f64> {
            price_range: (1.0, 1.0),
            ..CobbDouglasSpec::uniform(3, 1.0, 0)
        };
        let y = CobbDouglasSpec::<f64> {
            price_range: (1.0, 1.0),
            ..CobbDouglasSpec::uniform(2, 1.0, 0)
        };
        let part = gen_nested_cd(&q, &y, (0.5, 0.5), 2, 5).unwrap();
        for t in 0..2 {
            for &v in part.q_stats().quantity(t) {
                assert_relative_eq!(v, 0.5 / 3.0, max_relative = 1e-15);
            }
            for &v in part.y_stats().quantity(t) {
                assert_relative_eq!(v, 0.25, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn nested_multipliers_satisfy_the_system() {
        let q = CobbDouglasSpec::new(vec![0.6, 0.4], 1.0, 0);
        let y = CobbDouglasSpec::new(vec![0.6, 0.4], 1.0, 0);
        let part = gen_nested_cd(&q, &y, (0.5, 0.5), 8, 21).unwrap();
        let (l, m) = nested_cd_multipliers(&q.exponents, &y.exponents, (0.5, 0.5), &part);
        let inst = SeparabilityInstance::new(part);
        assert!(verify_separability_solution(&inst, &l, &m, 1e-12));
    }

    #[test]
    fn collective_example() {
        let specs = [
            CobbDouglasSpec::<f64> {
                price_range: (1.0, 1.0),
                ..CobbDouglasSpec::new(vec![0.8, 0.2], 1.0, 0)
            },
            CobbDouglasSpec::new(vec![0.2, 0.8], 1.0, 0),
        ];
        let (agg, witness) = gen_collective(&specs, 1, 0).unwrap();
        assert_relative_eq!(agg.quantity(0)[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(agg.quantity(0)[1], 1.0, max_relative = 1e-15);
        assert!(crate::collective::verify_allocation(&agg, &witness, 1e-12));
    }

    #[test]
    fn single_consumer_matches_plain_generator() {
        let spec = CobbDouglasSpec::new(vec![0.5, 0.5], 1.0, 9);
        let (agg, _) = gen_collective(std::slice::from_ref(&spec), 6, 9).unwrap();
        assert_eq!(agg, gen_cobb_douglas(&spec, 6).unwrap());
    }

    #[test]
    fn perturb_contract() {
        let s = gen_cobb_douglas(&CobbDouglasSpec::uniform(3, 1.0, 1), 5).unwrap();
        assert_eq!(perturb(&s, 0.0, 4).unwrap(), s);
        assert_eq!(perturb(&s, 0.3, 4).unwrap(), perturb(&s, 0.3, 4).unwrap());
        assert_ne!(perturb(&s, 0.3, 4).unwrap(), s);
        assert!(perturb(&s, 0.5, 4).is_err());
    }

    #[test]
    fn random_exponents_are_valid_shares() {
        let e: Vec<f64> = random_exponents(5, 3);
        assert_eq!(e, random_exponents::<f64>(5, 3));
        assert!(CobbDouglasSpec::new(e, 1.0, 0).validate().is_ok());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(CobbDouglasSpec::new(vec![0.5, 0.4], 1.0, 0).validate().is_err());
        assert!(CobbDouglasSpec::new(vec![1.0], -1.0, 0).validate().is_err());
        let spec = CobbDouglasSpec {
            budget: Budget::LogUniform(2.0, 1.0),
            ..CobbDouglasSpec::new(vec![1.0], 1.0, 0)
        };
        assert!(spec.validate().is_err());
    }
}
