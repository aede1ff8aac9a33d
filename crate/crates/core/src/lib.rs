//! Estimation of optimal transport (Brenier) maps from two unpaired samples by
//! minimizing the empirical semidual `S_n(φ) = ∫φ dP_n + ∫φ* dQ_n` over a class
//! of candidate potentials.
//!
//! - [`potential`]: candidate families with regularity certificates.
//! - [`conjugate`]: closed-form and gradient-ascent conjugate oracles.
//! - [`semidual`]: `S_n`, envelope gradients, simplex-projected gradient
//!   descent over dictionary weights, finite-class selection.
//! - [`closed_form`]: location-scale plug-in estimator.
//! - [`synthetic`]: seeded experiments, Monte Carlo risk, stability checks
//!   and rate sweeps.
//! - [`spiked`]: spike-direction recovery over a grid of axes.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod conjugate;
mod error;
mod linalg;
pub mod potential;
pub mod sample;
pub mod semidual;
pub mod spiked;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use potential::{Mixture, Potential, PotentialSpec, Quadratic, RegularityCertificate, Spiked};
pub use sample::SampleSet;
