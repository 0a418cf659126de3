//! Confidence intervals for linear predictors that stay valid after data-driven
//! model selection.
//!
//! The crate computes the multipliers `K` that replace the Student-t quantile
//! in `x0'[M] beta_hat_M +- K ||s_M|| sigma_hat`, builds the resulting
//! intervals, and provides the selectors and Monte Carlo harness used to study
//! their length and minimal coverage.

pub mod constants;
pub mod design;
pub mod error;
pub mod inference;
pub mod numerics;
pub mod selectors;
pub mod simharness;

pub use error::{PosiError, Result};
