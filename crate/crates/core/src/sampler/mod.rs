//! Metropolis-within-Gibbs samplers over the selection bits, correlation
//! parameters, precisions, nuisance parameters and latent values.
//!
//! Three selection schemes are provided:
//!
//! * [`Scheme::One`]: one Add, Delete or Swap proposal per iteration
//!   followed by a Keep move that refreshes the included `ρ`'s;
//! * [`Scheme::Two`]: a systematic scan that proposes to flip every
//!   selection bit in turn, each followed by a within-model refresh of the
//!   coordinate's `ρ` when it ends up included;
//! * [`Scheme::TwoAdaptive`]: the same scan with independence proposals
//!   `γ'_k ~ Bernoulli(α̂_k)`, where `α̂_k` is the running inclusion
//!   frequency. Proposals that leave an excluded coordinate excluded are
//!   free, which is where the speed-up comes from.
//!
//! A chain is strictly sequential and owns its random stream. Chain `c` of
//! a run with master seed `s` uses ChaCha8 seeded with `s` on stream `c`,
//! so chain 0 of any multi-chain run reproduces the single-chain run.

mod adaptive;
mod diagnostics;
mod engine;
mod state;
mod trace;

use std::fmt;
use std::str::FromStr;

pub use adaptive::{adapt_alpha, AdaptiveAlpha, ALPHA_MAX, ALPHA_MIN};
pub use diagnostics::{
    autocorrelation_time, effective_sample_size, marginal_inclusion, median_rho, ParameterSummary,
};
pub use engine::{run_chain, Sampler};
pub use state::ChainState;
pub use trace::{
    read_latent_mean, read_trace_csv, trace_header, write_latent_mean, write_manifest,
    write_trace_csv, BlockRate, MoveKind, MoveRecord, PosteriorTrace, TraceRecord,
};

use crate::dataset::ResponseKind;
use crate::kernel::KernelFamily;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    One,
    Two,
    TwoAdaptive,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::One => "one",
            Scheme::Two => "two",
            Scheme::TwoAdaptive => "two-adaptive",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one" => Ok(Scheme::One),
            "2" | "two" => Ok(Scheme::Two),
            "2a" | "two-adaptive" | "adaptive" => Ok(Scheme::TwoAdaptive),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Granularity of the Scheme 1 Keep move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KeepMode {
    /// Each included `ρ_k` is redrawn and accepted on its own.
    #[default]
    PerCoordinate,
    /// All included `ρ`'s are redrawn together with one acceptance test.
    Joint,
}

impl FromStr for KeepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-coordinate" | "coordinate" => Ok(KeepMode::PerCoordinate),
            "joint" => Ok(KeepMode::Joint),
            other => Err(Error::Config(format!("unknown keep mode `{other}`"))),
        }
    }
}

impl KeepMode {
    pub fn name(self) -> &'static str {
        match self {
            KeepMode::PerCoordinate => "per-coordinate",
            KeepMode::Joint => "joint",
        }
    }
}

/// How covariance proposals treat the latent values of count, survival
/// and logit models.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LatentCoupling {
    /// Latent values stay fixed while the covariance changes.
    Centered,
    /// Whitened latent values `L⁻¹ z` stay fixed, so `z` moves with the
    /// covariance.
    Whitened,
    /// Each proposal picks one of the two with probability 1/2.
    Mixed,
    /// A fresh `z` is drawn from the Laplace approximation of its
    /// conditional under the proposed covariance.
    #[default]
    Laplace,
}

impl FromStr for LatentCoupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(LatentCoupling::Centered),
            "whitened" => Ok(LatentCoupling::Whitened),
            "mixed" => Ok(LatentCoupling::Mixed),
            "laplace" => Ok(LatentCoupling::Laplace),
            other => Err(Error::Config(format!("unknown latent coupling `{other}`"))),
        }
    }
}

impl LatentCoupling {
    pub fn name(self) -> &'static str {
        match self {
            LatentCoupling::Centered => "centered",
            LatentCoupling::Whitened => "whitened",
            LatentCoupling::Mixed => "mixed",
            LatentCoupling::Laplace => "laplace",
        }
    }
}

/// Link for binary responses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BinaryLink {
    #[default]
    Probit,
    Logit,
}

impl FromStr for BinaryLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probit" => Ok(BinaryLink::Probit),
            "logit" => Ok(BinaryLink::Logit),
            other => Err(Error::Config(format!("unknown binary link `{other}`"))),
        }
    }
}

impl BinaryLink {
    pub fn name(self) -> &'static str {
        match self {
            BinaryLink::Probit => "probit",
            BinaryLink::Logit => "logit",
        }
    }
}

/// Everything about the model that is not data, prior or sampler tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: KernelFamily,
    pub link: BinaryLink,
    /// Intercept precision used for survival data, where the partial
    /// likelihood cannot identify a free intercept.
    pub cox_lambda_a: f64,
    /// Diagonal term added to the latent covariance of the count, survival
    /// and logit models.
    pub latent_jitter: f64,
    /// Starting Matérn smoothness.
    pub nu: f64,
    /// Sample `ν` instead of holding it fixed.
    pub update_nu: bool,
}

impl ModelSpec {
    pub fn new(family: KernelFamily) -> Self {
        ModelSpec {
            family,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cox_lambda_a > 0.0) {
            return Err(Error::Config("cox_lambda_a must be positive".into()));
        }
        if !(self.latent_jitter > 0.0) {
            return Err(Error::Config("latent_jitter must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config("nu must be positive".into()));
        }
        if self.update_nu && self.family != KernelFamily::Matern {
            return Err(Error::Config("nu can only be sampled with the matern family".into()));
        }
        Ok(())
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            family: KernelFamily::Exp1,
            link: BinaryLink::Probit,
            cox_lambda_a: 100.0,
            latent_jitter: 1e-2,
            nu: 2.5,
            update_nu: false,
        }
    }
}

/// Which parameter blocks are updated; all on by default. Turning blocks
/// off holds them at their starting values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateBlocks {
    pub selection: bool,
    pub precisions: bool,
    pub nuisance: bool,
    pub latent: bool,
}

impl Default for UpdateBlocks {
    fn default() -> Self {
        UpdateBlocks {
            selection: true,
            precisions: true,
            nuisance: true,
            latent: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    /// Latent proposals per iteration (`R`).
    pub z_reps: usize,
    /// Latent proposal step `ε`; tuned during burn-in when `autotune` is on.
    pub z_step: f64,
    /// Shape `s` of the Gamma proposals for precisions and nuisance
    /// parameters; larger is more local.
    pub lambda_proposal_shape: f64,
    /// Adjust `z_step` and the Gamma shapes during burn-in toward 40–60%
    /// acceptance.
    pub autotune: bool,
    /// Knot ratio `m/n` for the projected (predictive process) model.
    pub projection: Option<f64>,
    pub seed: u64,
    /// Stream index of this chain.
    pub chain: u64,
    pub keep_mode: KeepMode,
    pub latent_coupling: LatentCoupling,
    /// After the `R` latent proposals, one independence proposal from the
    /// Laplace approximation of the latent conditional (count, survival
    /// and logit models).
    pub z_laplace: bool,
    /// Sweeps of plain Scheme 2 before adaptive proposals start.
    pub adapt_warmup: usize,
    /// Evaluate the data likelihood; off gives the prior as target.
    pub use_likelihood: bool,
    pub blocks: UpdateBlocks,
    /// Keep the latent vector in every retained record.
    pub store_latent: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            scheme: Scheme::Two,
            iters: 5000,
            burnin: 1000,
            thin: 1,
            z_reps: 5,
            z_step: 0.3,
            lambda_proposal_shape: 10.0,
            autotune: true,
            projection: None,
            seed: 1,
            chain: 0,
            keep_mode: KeepMode::PerCoordinate,
            latent_coupling: LatentCoupling::Laplace,
            z_laplace: true,
            adapt_warmup: 100,
            use_likelihood: true,
            blocks: UpdateBlocks::default(),
            store_latent: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.thin == 0 {
            return Err(Error::Config("iters and thin must be positive".into()));
        }
        if self.burnin >= self.iters {
            return Err(Error::Config(format!(
                "burnin ({}) must be smaller than iters ({})",
                self.burnin, self.iters
            )));
        }
        if self.z_reps == 0 {
            return Err(Error::Config("z_reps must be positive".into()));
        }
        if !(self.z_step > 0.0 && self.z_step <= 1.0) {
            return Err(Error::Config(format!("z_step must lie in (0, 1], got {}", self.z_step)));
        }
        if !(self.lambda_proposal_shape > 0.0) {
            return Err(Error::Config("lambda_proposal_shape must be positive".into()));
        }
        if let Some(ratio) = self.projection {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Config(format!("projection ratio must lie in (0, 1), got {ratio}")));
            }
        }
        Ok(())
    }

    /// Number of retained records a run will produce.
    pub fn retained(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

/// Cross-checks between the model, the data and the sampler settings that
/// must hold before any compute.
pub fn validate_combination(kind: ResponseKind, spec: &ModelSpec, config: &SamplerConfig) -> Result<()> {
    spec.validate()?;
    config.validate()?;
    if kind == ResponseKind::Binary && spec.link == BinaryLink::Probit && config.projection.is_some() {
        return Err(Error::Config(
            "knot projection is not available for the probit model; use the logit link".into(),
        ));
    }
    Ok(())
}
