//! Deterministic building blocks for training predictors that stay invariant
//! across data-generating environments.
//!
//! The crate is `no_std` (with `alloc`) and routes every transcendental
//! through `libm`, so identical seeds produce bit-identical datasets, models,
//! and metrics on every platform. It provides:
//!
//! * a seeded, streamable PRNG and two synthetic environment families
//!   (a structural-equation regression task and a spurious-correlation
//!   classification task) in [`rng`] and [`data`],
//! * linear and small MLP predictors with a cotangent-based backward pass
//!   in [`model`],
//! * per-environment risks and gradient penalties, including the worst-case
//!   extrapolated penalty and the variance-weighted penalty, in [`penalty`],
//! * independent verification oracles (finite differences, LP vertex
//!   enumeration, closed-form least squares) in [`oracle`],
//! * full-batch training with grid search and validation-split model
//!   selection in [`train`],
//! * invariance errors and calibration metrics in [`metrics`].

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod data;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod penalty;
pub mod rng;
pub mod train;

pub use error::CoreError;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;
