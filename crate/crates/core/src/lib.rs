//! Median-of-means estimators for means, covariance and Tukey-depth
//! centers, with a contamination simulator and an experiment harness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

#[cfg(feature = "cli")]
pub mod cli;

pub mod blocking;
pub mod contamination;
pub mod covariance;
pub mod depth;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mean;
pub mod model;

pub use error::{Error, Result};
pub use model::{Dataset, DirectionPool, RngStream, SymMatrix, Vector};
