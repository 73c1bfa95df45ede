//! Log-domain convex feasibility programs and their barrier solver.
//!
//! A program holds log-variables, nonnegative slacks and constraints of the
//! shape `affine + log Σ c e^{affine} <= affine + log(K - Σ D e^{affine} - Σ c x)`.
//! Minimizing the sum of slacks decides feasibility of the original system.

mod program;
mod solver;

pub use program::{
    eval_constraint, gradient, Affine, ConstraintRecord, ExpTerm, LogConvexProgram, LogResidual,
    LogSumExp, SlackBinding, VarKind, Variable, DEFAULT_BOX_BOUND,
};
pub use solver::{
    max_violation, solve, SolveOptions, SolveResult, DEFAULT_EPS_FEAS, DEFAULT_MAX_ITER,
};
