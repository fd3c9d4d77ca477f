//! Gaussian-process regression, classification, count and survival models
//! with spike-and-slab selection of the predictors that enter the
//! covariance kernel.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`] ingests tabular data and rescales predictors to the unit cube.
//! * [`distcache`] precomputes deduplicated squared predictor differences.
//! * [`kernel`] assembles covariance matrices, factorizes them and provides
//!   the knot-projection machinery.
//! * [`likelihood`] and [`prior`] evaluate the model densities.
//! * [`sampler`] runs the Metropolis-within-Gibbs schemes.
//! * [`predict`] turns a posterior trace into predictions.
//! * [`simgen`] generates the synthetic benchmark datasets.

pub mod dataset;
pub mod distcache;
mod error;
pub mod kernel;
pub mod likelihood;
pub mod predict;
pub mod prior;
pub mod sampler;
pub mod simgen;
pub mod special;

pub use error::{Error, Result};
