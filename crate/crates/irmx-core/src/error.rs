//! Error type shared across the crate.

use core::fmt;

/// All failure modes of the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A vector or matrix had the wrong length/shape.
    DimensionMismatch { expected: usize, got: usize },
    /// An argument violated a documented precondition.
    InvalidArgument(&'static str),
    /// `alpha_min` exceeds `1/|E|`, so the extrapolation set is empty.
    InfeasibleAlphaMin { alpha_min: f64, n_envs: usize },
    /// The objective became non-finite during training.
    Diverged { iteration: u64 },
    /// Every configuration in a grid search diverged.
    AllConfigsDiverged,
    /// The pooled design matrix is (numerically) rank deficient.
    RankDeficient,
    /// An oracle evaluation returned a non-finite value.
    OracleNonFinite,
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::InfeasibleAlphaMin { alpha_min, n_envs } => write!(
                f,
                "alpha_min = {alpha_min} is infeasible for {n_envs} environments (must be <= 1/{n_envs})"
            ),
            CoreError::Diverged { iteration } => {
                write!(f, "objective became non-finite at iteration {iteration}")
            }
            CoreError::AllConfigsDiverged => write!(f, "every grid configuration diverged"),
            CoreError::RankDeficient => write!(f, "design matrix is rank deficient"),
            CoreError::OracleNonFinite => write!(f, "oracle evaluated to a non-finite value"),
        }
    }
}

#[cfg(any(test, feature = "std"))]
impl std::error::Error for CoreError {}
