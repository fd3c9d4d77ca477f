//! Summaries of a posterior trace: inclusion probabilities, posterior
//! medians, autocorrelation times and effective sample sizes.

use crate::{Error, Result};

use super::PosteriorTrace;

/// Fraction of retained records in which each predictor is included (in
/// any term of the kernel).
pub fn marginal_inclusion(trace: &PosteriorTrace) -> Result<Vec<f64>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let p = trace.p();
    let mut counts = vec![0usize; p];
    for r in &trace.records {
        for (k, c) in counts.iter_mut().enumerate() {
            if r.params.included(k) {
                *c += 1;
            }
        }
    }
    let n = trace.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Posterior median of `ρ_{t,k}`, spike values included.
pub fn median_rho(trace: &PosteriorTrace, term: usize, k: usize) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut v = trace.rho_series(term, k);
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Integrated autocorrelation time `1 + 2 Σ_{l ≥ 1} ρ̂_l`, summing the
/// initial run of positive sample autocorrelations.
pub fn autocorrelation_time(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::InvalidParameter(format!(
            "autocorrelation time needs at least 10 samples, got {n}"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::ZeroVariance("series is constant".into()));
    }
    let mut tau = 1.0;
    for lag in 1..n {
        let c: f64 = dev[..n - lag].iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let rho = c / c0;
        if rho <= 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    Ok(tau)
}

/// `N / τ`.
pub fn effective_sample_size(samples: &[f64]) -> Result<f64> {
    Ok(samples.len() as f64 / autocorrelation_time(samples)?)
}

/// Mean, autocorrelation time and effective sample size of one scalar
/// series; `tau` and `ess` are `None` for a constant series.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub tau: Option<f64>,
    pub ess: Option<f64>,
}

impl ParameterSummary {
    pub fn from_samples(name: impl Into<String>, samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (tau, ess) = match autocorrelation_time(samples) {
            Ok(t) => (Some(t), Some(samples.len() as f64 / t)),
            Err(Error::ZeroVariance(_)) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(ParameterSummary {
            name: name.into(),
            mean,
            tau,
            ess,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.tau.is_none()
    }
}
