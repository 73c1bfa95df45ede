//! Revealed-preference tests for positively homogeneous utilities.
//!
//! * [`harp`]: exact homogeneous Afriat test with multiplier recovery.
//! * [`separability`]: complete PH-separability of a goods partition.
//! * [`collective`]: k-consumer rationalization and the class number.
//! * [`convex`]: the log-domain program solver used by the last two.
//! * [`datagen`]: Cobb-Douglas ground-truth generators.
//! * [`oracle`]: brute-force deciders for tiny instances.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the double-precision instantiation used by the command line tool.

// Negated comparisons (`!(x > 0)`) are deliberate: they also catch NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collective;
pub mod convex;
pub mod datagen;
pub mod error;
pub mod harp;
mod linalg;
pub mod model;
pub mod oracle;
mod scalar;
pub mod separability;
pub mod utility;

pub use error::{Error, Result};
pub use model::{load_statistics, partition, save_statistics, Decision, Status};
pub use scalar::Scalar;

pub type MarketStatistics = model::MarketStatistics<f64>;
pub type PartitionedStatistics = model::PartitionedStatistics<f64>;
pub type AfriatCertificate = harp::AfriatCertificate<f64>;
pub type PiecewiseLinearUtility = utility::PiecewiseLinearUtility<f64>;
