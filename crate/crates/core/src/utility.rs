//! Min-of-linear-forms utilities reconstructed from multipliers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// One linear piece `weight * (prices · x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LinearPiece<S> {
    pub weight: S,
    pub prices: Vec<S>,
}

/// `f(x) = min_t weight_t * (prices_t · x)`.
///
/// Positively homogeneous of degree one, concave and nondecreasing, and
/// strictly positive on the open orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PiecewiseLinearUtility<S> {
    pieces: Vec<LinearPiece<S>>,
}

impl<S: Scalar> PiecewiseLinearUtility<S> {
    pub fn new(pieces: Vec<LinearPiece<S>>) -> Result<Self> {
        let dim = pieces
            .first()
            .map(|p| p.prices.len())
            .ok_or_else(|| Error::InvalidParameter("utility needs at least one piece".into()))?;
        for piece in &pieces {
            if piece.prices.len() != dim {
                return Err(Error::Shape("pieces of different dimension".into()));
            }
            if !(piece.weight > S::zero()) || piece.prices.iter().any(|&p| !(p > S::zero())) {
                return Err(Error::InvalidParameter(
                    "weights and prices must be positive".into(),
                ));
            }
        }
        Ok(Self { pieces })
    }

    /// Builds the pieces from multipliers and matching price rows.
    pub fn from_multipliers(weights: &[S], prices: &[Vec<S>]) -> Result<Self> {
        if weights.len() != prices.len() {
            return Err(Error::Shape("one weight per price row expected".into()));
        }
        Self::new(
            weights
                .iter()
                .zip(prices)
                .map(|(&weight, p)| LinearPiece {
                    weight,
                    prices: p.clone(),
                })
                .collect(),
        )
    }

    pub fn pieces(&self) -> &[LinearPiece<S>] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].prices.len()
    }

    pub fn value(&self, x: &[S]) -> S {
        self.pieces
            .iter()
            .map(|p| p.weight * dot(&p.prices, x))
            .fold(S::infinity(), S::min)
    }
}

/// Macro utility `u0(q, z) = min_t mu_t * (p^t · q + z / lambda_t)`.
///
/// Concave, jointly homogeneous of degree one and strictly increasing in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MacroUtility<S> {
    pub mus: Vec<S>,
    pub prices: Vec<Vec<S>>,
    pub inv_lambdas: Vec<S>,
}

impl<S: Scalar> MacroUtility<S> {
    pub fn value(&self, q: &[S], z: S) -> S {
        self.mus
            .iter()
            .zip(&self.prices)
            .zip(&self.inv_lambdas)
            .map(|((&mu, p), &il)| mu * (dot(p, q) + z * il))
            .fold(S::infinity(), S::min)
    }
}
