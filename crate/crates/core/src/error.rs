use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building or validating inputs.
///
/// Rows and columns are 1-based to match what a user sees in the CSV file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed row {row}, column {column}: {reason}")]
    MalformedRow {
        row: usize,
        column: usize,
        reason: String,
    },
    #[error("non-positive value at row {row}, column {column}")]
    NonpositiveValue { row: usize, column: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("partition leaves an empty block")]
    EmptyBlock,
    #[error("goods index {index} out of range for {goods} goods")]
    IndexOutOfRange { index: usize, goods: usize },
    #[error("certificate does not satisfy the Afriat inequalities")]
    InvalidCertificate,
    #[error("multipliers do not satisfy the separability inequalities")]
    InvalidMultipliers,
    #[error("log-residual argument is not positive in constraint {0}")]
    DomainViolation(usize),
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error("instance exceeds oracle size limit: {0}")]
    SizeLimit(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
