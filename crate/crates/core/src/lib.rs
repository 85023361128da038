//! Sample correlation matrices and their extreme eigenvalues.
//!
//! The crate builds correlation (`W = YYᵀ`), centred correlation (`ℛ = RRᵀ`)
//! and covariance (`S = XXᵀ`) matrices from symmetric ensembles, computes
//! their spectra, evaluates the Tracy–Widom (β = 1) law through the
//! Hastings–McLeod solution of Painlevé II, and runs Monte Carlo experiments
//! that compare finite-size edge statistics to that limit.

pub mod airy;
pub mod cli;
pub mod eigen;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod mp_law;
pub mod quadrature;
pub mod rng;
pub mod spectra;
pub mod tracy_widom;
pub mod verify;

pub use error::{Error, Result};
