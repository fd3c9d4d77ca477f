//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The computations live in [`demo`] as plain Rust so they can be tested
//! natively; the exported functions only convert errors for JavaScript.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Prior sample paths on an even grid over [0, 1], `draws × points`,
/// row-major.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn prior_draws(
    family: &str,
    rho: f64,
    nu: f64,
    lambda_a: f64,
    lambda_z: f64,
    points: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    demo::prior_draws(family, rho, nu, lambda_a, lambda_z, points, draws, seed).map_err(js)
}

/// Exponential correlations followed by Matérn correlations at distances
/// `0, 1/(points-1), …, 1`.
#[wasm_bindgen]
pub fn correlation_curves(rho: f64, nu: f64, points: usize) -> Result<Vec<f64>, JsError> {
    demo::correlation_curves(rho, nu, points).map_err(js)
}

/// Marginal inclusion probabilities, then median ρ's, of a short
/// Scheme 2 run on simulated `x1 + x2 + sin(3 x3) + sin(5 x4)` data.
#[wasm_bindgen]
pub fn selection_run(n: usize, p: usize, iters: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    demo::selection_run(n, p, iters, seed).map_err(js)
}
