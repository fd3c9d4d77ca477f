//! Spike-and-slab priors on the correlation parameters, inclusion priors on
//! the selection bits and Gamma priors on precisions.
//!
//! Gamma priors use the shape/rate convention throughout (mean
//! `shape / rate`). The spike at `ρ = 1` contributes 0 to the log-prior: it
//! is a point mass, and the dimension penalty lives entirely in the
//! inclusion prior.

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::kernel::{KernelFamily, KernelParams};
use crate::{Error, Result};

/// Density of `ρ_k` given `γ_k = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slab {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl Slab {
    /// Log-density on [0, 1].
    pub fn log_density(&self, rho: f64) -> f64 {
        match *self {
            Slab::Uniform => {
                if (0.0..=1.0).contains(&rho) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Slab::Beta { a, b } => {
                if !(0.0..=1.0).contains(&rho) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * rho.ln() + (b - 1.0) * (1.0 - rho).ln() - ln_beta(a, b)
            }
        }
    }
}

/// Prior on the selection bits.
#[derive(Clone, Debug, PartialEq)]
pub enum InclusionPrior {
    /// Independent `Bernoulli(α)` for every coordinate.
    FixedAlpha(f64),
    /// Independent `Bernoulli(α_k)` with per-coordinate rates.
    PerCoordinate(Vec<f64>),
    /// `α ~ Beta(2m, 2(1 - m))` integrated out: the Beta parameters sum to 2.
    BetaBernoulli { mean: f64 },
}

impl InclusionPrior {
    fn alpha(&self, k: usize) -> f64 {
        match self {
            InclusionPrior::FixedAlpha(a) => *a,
            InclusionPrior::PerCoordinate(v) => v[k],
            InclusionPrior::BetaBernoulli { mean } => *mean,
        }
    }

    fn beta_params(mean: f64) -> (f64, f64) {
        (2.0 * mean, 2.0 * (1.0 - mean))
    }

    /// Change in log-prior when coordinate `k` switches from excluded to
    /// included while `included` other coordinates (out of `p`) are in.
    pub fn log_odds_add(&self, k: usize, included: usize, p: usize) -> f64 {
        match self {
            InclusionPrior::BetaBernoulli { mean } => {
                let (a, b) = Self::beta_params(*mean);
                let kk = included as f64;
                ((a + kk) / (b + (p - included) as f64 - 1.0)).ln()
            }
            _ => {
                let a = self.alpha(k);
                (a / (1.0 - a)).ln()
            }
        }
    }

    /// Prior inclusion probability of a single coordinate.
    pub fn marginal_alpha(&self, k: usize) -> f64 {
        self.alpha(k)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a < 1.0;
        match self {
            InclusionPrior::FixedAlpha(a) | InclusionPrior::BetaBernoulli { mean: a } if !ok(*a) => {
                Err(Error::InvalidParameter(format!("inclusion rate {a} outside (0, 1)")))
            }
            InclusionPrior::PerCoordinate(v) if v.len() != p || !v.iter().all(|&a| ok(a)) => Err(
                Error::InvalidParameter("per-coordinate inclusion rates must be p values in (0, 1)".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// `Gamma(shape, rate)` prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        GammaPrior { shape, rate }
    }

    /// Build from a shape/scale pair.
    pub fn from_scale(shape: f64, scale: f64) -> Self {
        GammaPrior {
            shape,
            rate: 1.0 / scale,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        logprior_positive(x, self.shape, self.rate)
    }
}

/// How the two selection vectors of a two-term kernel are tied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TwoTermMode {
    #[default]
    Separate,
    JointProduct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorConfig {
    pub slab: Slab,
    pub inclusion: InclusionPrior,
    pub lambda_a: GammaPrior,
    pub lambda_z: GammaPrior,
    pub lambda_z2: GammaPrior,
    pub r: GammaPrior,
    pub tau: GammaPrior,
    pub nu: GammaPrior,
    pub two_term_mode: TwoTermMode,
}

impl Default for PriorConfig {
    /// Uniform slab, `α = 0.025`, `G(1, 1)` on every precision, `τ` and `ν`,
    /// and `G(2, 0.1)` on the error precision `r`.
    fn default() -> Self {
        PriorConfig {
            slab: Slab::Uniform,
            inclusion: InclusionPrior::FixedAlpha(0.025),
            lambda_a: GammaPrior::new(1.0, 1.0),
            lambda_z: GammaPrior::new(1.0, 1.0),
            lambda_z2: GammaPrior::new(1.0, 1.0),
            r: GammaPrior::new(2.0, 0.1),
            tau: GammaPrior::new(1.0, 1.0),
            nu: GammaPrior::new(1.0, 1.0),
            two_term_mode: TwoTermMode::Separate,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        self.inclusion.validate(p)?;
        if let Slab::Beta { a, b } = self.slab {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidParameter("Beta slab parameters must be positive".into()));
            }
        }
        for (name, g) in [
            ("lambda_a", self.lambda_a),
            ("lambda_z", self.lambda_z),
            ("lambda_z2", self.lambda_z2),
            ("r", self.r),
            ("tau", self.tau),
            ("nu", self.nu),
        ] {
            if !(g.shape > 0.0 && g.rate > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} prior must have positive shape and rate")));
            }
        }
        Ok(())
    }
}

/// `log π(ρ_k | γ_k)`: 0 on the spike, the slab log-density otherwise.
pub fn logprior_rho_given_gamma(rho: f64, gamma: bool, slab: &Slab) -> Result<f64> {
    if !gamma {
        if rho != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "excluded coordinate must sit on the spike, found rho = {rho}"
            )));
        }
        return Ok(0.0);
    }
    Ok(slab.log_density(rho))
}

/// Joint product prior for a shared selection bit over two terms.
pub fn logprior_rho_pair(rho1: f64, rho2: f64, gamma: bool, slab: &Slab) -> Result<f64> {
    Ok(logprior_rho_given_gamma(rho1, gamma, slab)? + logprior_rho_given_gamma(rho2, gamma, slab)?)
}

/// Log prior mass of a selection vector.
pub fn logprior_gamma_vector(gamma: &[bool], inclusion: &InclusionPrior) -> f64 {
    match inclusion {
        InclusionPrior::BetaBernoulli { mean } => {
            let (a, b) = InclusionPrior::beta_params(*mean);
            let p = gamma.len() as f64;
            let k = gamma.iter().filter(|&&g| g).count() as f64;
            ln_beta(a + k, b + p - k) - ln_beta(a, b)
        }
        _ => gamma
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                let a = inclusion.alpha(k);
                if g {
                    a.ln()
                } else {
                    (1.0 - a).ln()
                }
            })
            .sum(),
    }
}

/// Log prior of every selection bit and correlation parameter in `params`.
/// Separate two-term kernels carry one selection vector per term; the
/// joint two-term kernel counts its shared vector once.
pub fn logprior_selection(params: &KernelParams, prior: &PriorConfig) -> Result<f64> {
    let rho_part = |t: &crate::kernel::KernelTerm| -> Result<f64> {
        let mut lp = 0.0;
        for (&g, &r) in t.gamma.iter().zip(&t.rho) {
            lp += logprior_rho_given_gamma(r, g, &prior.slab)?;
        }
        Ok(lp)
    };
    let mut lp = 0.0;
    if params.family == KernelFamily::Exp2Joint {
        lp += logprior_gamma_vector(&params.terms[0].gamma, &prior.inclusion);
        for t in &params.terms {
            lp += rho_part(t)?;
        }
    } else {
        // one complete term at a time, so separate terms add up exactly
        for t in &params.terms {
            lp += logprior_gamma_vector(&t.gamma, &prior.inclusion) + rho_part(t)?;
        }
    }
    Ok(lp)
}

/// `Gamma(shape, rate)` log-density at `x > 0`.
pub fn logprior_positive(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("Gamma density needs x > 0, got {x}")));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_prior_cases() {
        assert_eq!(logprior_rho_given_gamma(1.0, false, &Slab::Uniform).unwrap(), 0.0);
        assert!(logprior_rho_given_gamma(0.4, false, &Slab::Uniform).is_err());
        for &r in &[0.0, 0.2, 0.999, 1.0] {
            assert_eq!(logprior_rho_given_gamma(r, true, &Slab::Uniform).unwrap(), 0.0);
        }
        let b = logprior_rho_given_gamma(0.5, true, &Slab::Beta { a: 2.0, b: 2.0 }).unwrap();
        assert!((b - 1.5f64.ln()).abs() < 1e-14);
        let pair = logprior_rho_pair(0.5, 0.5, true, &Slab::Beta { a: 2.0, b: 2.0 }).unwrap();
        assert!((pair - 2.0 * 1.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn fixed_alpha_mass() {
        let inc = InclusionPrior::FixedAlpha(0.025);
        let none = logprior_gamma_vector(&[false; 20], &inc);
        assert!((none - 20.0 * 0.975f64.ln()).abs() < 1e-12);
        let mut g = [false; 20];
        g[3] = true;
        let one = logprior_gamma_vector(&g, &inc);
        assert!((one - none - (0.025f64 / 0.975).ln()).abs() < 1e-12);
        assert!((inc.log_odds_add(3, 0, 20) - (one - none)).abs() < 1e-12);
    }

    #[test]
    fn beta_bernoulli_odds_match_mass_difference() {
        let inc = InclusionPrior::BetaBernoulli { mean: 0.1 };
        let mut g = vec![false; 6];
        g[0] = true;
        g[4] = true;
        let before = logprior_gamma_vector(&g, &inc);
        let odds = inc.log_odds_add(2, 2, 6);
        g[2] = true;
        let after = logprior_gamma_vector(&g, &inc);
        assert!((after - before - odds).abs() < 1e-12);
    }

    #[test]
    fn gamma_density() {
        for &x in &[0.1, 1.0, 3.7] {
            assert!((logprior_positive(x, 1.0, 1.0).unwrap() + x).abs() < 1e-14);
        }
        // G(2, 0.1): mode at (a-1)/b = 10, density x e^{-x/10} / (Γ(2) 10²)
        let at_mode = logprior_positive(10.0, 2.0, 0.1).unwrap();
        let want = (10.0 * (-1.0f64).exp() / 100.0).ln();
        assert!((at_mode - want).abs() < 1e-13);
        assert!(logprior_positive(9.9, 2.0, 0.1).unwrap() < at_mode);
        assert!(logprior_positive(10.1, 2.0, 0.1).unwrap() < at_mode);
        assert!(logprior_positive(0.0, 1.0, 1.0).is_err());
        assert!((GammaPrior::new(2.0, 0.1).mean() - 20.0).abs() < 1e-12);
        assert_eq!(GammaPrior::from_scale(2.0, 10.0), GammaPrior::new(2.0, 0.1));
    }
}
