//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::str::FromStr
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Conversion from a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Relative inequality `lhs <= rhs * (1 + tol)` for nonnegative quantities.
pub(crate) fn le_rel<S: Scalar>(lhs: S, rhs: S, tol: S) -> bool {
    lhs <= rhs * (S::one() + tol)
}

/// `log(Σ exp(v_i))` computed with a max shift.
pub(crate) fn log_sum_exp<S: Scalar>(values: impl IntoIterator<Item = S> + Clone) -> S {
    let max = values
        .clone()
        .into_iter()
        .fold(S::neg_infinity(), |m, v| m.max(v));
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Exponentiates log-multipliers and rescales them to sum to one.
pub(crate) fn normalize_from_logs<S: Scalar>(logs: &[S]) -> Vec<S> {
    let lse = log_sum_exp(logs.iter().copied());
    logs.iter().map(|&l| (l - lse).exp()).collect()
}
