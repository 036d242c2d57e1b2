//! Finite-sample prediction risk of the minimum-norm least-squares estimator.
//!
//! The crate computes the exact bias/variance/risk decomposition of the
//! min-norm estimator for a single design draw, the limiting (CLT) mean,
//! variance and confidence intervals of that risk in both the under- and
//! over-parametrized regimes, and provides a deterministic Monte Carlo
//! harness that reproduces the cover-rate and normality experiments,
//! including the sample-wise double-descent confidence band.

pub mod asymptotics;
pub mod error;
pub mod estimator;
pub mod montecarlo;
pub mod normal;
pub mod randgen;
pub mod risk;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
