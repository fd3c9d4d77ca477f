//! Model evaluation for the sampler: cached kernel terms, covariance
//! assembly and the log-target of every response model.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ModelData, Response, ResponseKind};
use crate::distcache::DistanceCache;
use crate::kernel::{combine, factorize, select_knots, Factor, KernelFamily, KernelParams};
use crate::likelihood::{
    curvature_cox, curvature_logit, curvature_negbin, loglik_cox_partial, Curvature, loglik_gaussian_noise, loglik_logit, loglik_negbin,
    loglik_regression_projected, mvn_log_density, LatentState, NuisanceBlock,
};
use crate::prior::{logprior_selection, PriorConfig};
use crate::special::matern_correlation;
use crate::{Error, Result};

use super::{BinaryLink, ModelSpec};

/// Current values of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub params: KernelParams,
    pub h: NuisanceBlock,
    /// Explicit latent values; absent for the regression model, where the
    /// process is integrated out. Under knot projection `z` lives on the
    /// knots.
    pub latent: Option<LatentState>,
    /// Unnormalized log-posterior of the current values.
    pub log_post: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum Target {
    Regression(DVector<f64>),
    Probit(Vec<bool>),
    Logit(Vec<bool>),
    Count(Vec<u64>),
    Cox { time: Vec<f64>, event: Vec<bool> },
}

impl Target {
    fn from_data(data: &ModelData, link: BinaryLink) -> Target {
        match &data.response {
            Response::Continuous(y) => Target::Regression(DVector::from_column_slice(y)),
            Response::Binary(t) => match link {
                BinaryLink::Probit => Target::Probit(t.clone()),
                BinaryLink::Logit => Target::Logit(t.clone()),
            },
            Response::Count(s) => Target::Count(s.clone()),
            Response::Survival { time, event } => Target::Cox {
                time: time.clone(),
                event: event.clone(),
            },
        }
    }
}

/// Distance caches the covariance blocks are built on: one self cache, or
/// a knot cache and a knot-by-observation cache under projection.
#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    pub blocks: Vec<DistanceCache>,
    pub knots: Option<Vec<usize>>,
}

impl Geometry {
    fn new(x: &DMatrix<f64>, projection: Option<f64>, seed: u64) -> Result<Geometry> {
        match projection {
            None => Ok(Geometry {
                blocks: vec![DistanceCache::build_self(x)?],
                knots: None,
            }),
            Some(ratio) => {
                let n = x.nrows();
                let m = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
                let knots = select_knots(n, m, seed)?;
                let xk = x.select_rows(&knots);
                Ok(Geometry {
                    blocks: vec![DistanceCache::build_self(&xk)?, DistanceCache::build(&xk, x)?],
                    knots: Some(knots),
                })
            }
        }
    }

    pub fn projected(&self) -> bool {
        self.knots.is_some()
    }
}

/// One kernel term evaluated on every block: weighted distances per
/// distinct row and the unscaled kernel matrix.
#[derive(Clone, Debug)]
pub(crate) struct TermCache {
    d: Vec<Vec<f64>>,
    pub k: Vec<DMatrix<f64>>,
}

fn kernel_values(d: &[f64], family: KernelFamily, nu: f64) -> Result<Vec<f64>> {
    match family {
        KernelFamily::Matern => d.iter().map(|&dl| matern_correlation(dl, nu)).collect(),
        _ => Ok(d.iter().map(|&dl| (-dl).exp()).collect()),
    }
}

/// Log-likelihood pieces of a state. `gauss` is the Gaussian part (the
/// marginal density of the responses, or the prior density of the latent
/// values); `data` is the likelihood of the observations given explicit
/// latent values.
#[derive(Clone, Debug)]
pub(crate) struct Fit {
    pub gauss: f64,
    pub data: f64,
    /// Factor of the latent covariance (plus jitter), or of `C + I` for
    /// the probit model.
    pub factor: Option<Factor>,
    /// `C_nm (C_mm + ηI)^{-1}` under projection.
    pub proj: Option<DMatrix<f64>>,
}

impl Fit {
    pub fn total(&self) -> f64 {
        self.gauss + self.data
    }
}

pub(crate) struct Model {
    pub target: Target,
    pub geom: Geometry,
    pub spec: ModelSpec,
    pub prior: PriorConfig,
    pub use_likelihood: bool,
    pub kind: ResponseKind,
    pub n: usize,
    pub p: usize,
}

impl Model {
    pub fn new(
        data: &ModelData,
        spec: ModelSpec,
        prior: PriorConfig,
        projection: Option<f64>,
        seed: u64,
        use_likelihood: bool,
    ) -> Result<Model> {
        let geom = Geometry::new(&data.x, projection, seed)?;
        Ok(Model {
            target: Target::from_data(data, spec.link),
            geom,
            kind: data.response.kind(),
            spec,
            prior,
            use_likelihood,
            n: data.n(),
            p: data.p(),
        })
    }

    /// Whether `λ_a` is held fixed (survival model).
    pub fn fixed_lambda_a(&self) -> bool {
        matches!(self.target, Target::Cox { .. })
    }

    pub fn has_r(&self) -> bool {
        matches!(self.target, Target::Regression(_))
    }

    pub fn has_tau(&self) -> bool {
        matches!(self.target, Target::Count(_))
    }

    pub fn is_probit(&self) -> bool {
        matches!(self.target, Target::Probit(_))
    }

    /// Dimension of the explicit latent vector, if any.
    pub fn latent_dim(&self) -> Option<usize> {
        match self.target {
            Target::Regression(_) => None,
            Target::Probit(_) => Some(self.n),
            _ => Some(match &self.geom.knots {
                Some(k) => k.len(),
                None => self.n,
            }),
        }
    }

    pub fn term_cache(&self, rho: &[f64], nu: f64) -> Result<TermCache> {
        let mut d = Vec::with_capacity(self.geom.blocks.len());
        let mut k = Vec::with_capacity(self.geom.blocks.len());
        for cache in &self.geom.blocks {
            let dist = cache.weighted_distances(rho)?;
            k.push(cache.inflate_values(&kernel_values(&dist, self.spec.family, nu)?));
            d.push(dist);
        }
        Ok(TermCache { d, k })
    }

    /// Term cache after `ρ_k` moves from `rho_old` to `rho_new`: only
    /// column `k` of each distance cache is touched. Falls back to a full
    /// rebuild when either value is 0 (infinite log-distance weight).
    pub fn shift_term(
        &self,
        old: &TermCache,
        k: usize,
        rho_old: f64,
        rho_new: f64,
        rho_full: &[f64],
        nu: f64,
    ) -> Result<TermCache> {
        if rho_old == rho_new {
            return Ok(old.clone());
        }
        if !(rho_old > 0.0 && rho_new > 0.0) {
            return self.term_cache(rho_full, nu);
        }
        let delta = rho_old.ln() - rho_new.ln();
        let mut d = Vec::with_capacity(old.d.len());
        let mut kk = Vec::with_capacity(old.d.len());
        for (cache, dold) in self.geom.blocks.iter().zip(&old.d) {
            let dist: Vec<f64> = dold
                .iter()
                .zip(cache.column(k))
                .map(|(&dl, &a)| dl + a * delta)
                .collect();
            kk.push(cache.inflate_values(&kernel_values(&dist, self.spec.family, nu)?));
            d.push(dist);
        }
        Ok(TermCache { d, k: kk })
    }

    pub fn terms(&self, params: &KernelParams) -> Result<Vec<TermCache>> {
        params
            .terms
            .iter()
            .map(|t| self.term_cache(&t.rho, params.nu))
            .collect()
    }

    /// Covariance blocks for the given precisions.
    pub fn covariances(&self, params: &KernelParams, terms: &[TermCache]) -> Vec<DMatrix<f64>> {
        (0..self.geom.blocks.len())
            .map(|b| {
                let pairs: Vec<_> = terms
                    .iter()
                    .zip(&params.terms)
                    .map(|(tc, t)| (&tc.k[b], t.lambda_z))
                    .collect();
                combine(params.lambda_a, &pairs)
            })
            .collect()
    }

    fn with_jitter(&self, c: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
        let mut out = c.clone();
        for i in 0..out.nrows() {
            out[(i, i)] += jitter;
        }
        out
    }

    /// Latent values at the observations.
    pub fn latent_full(&self, fit: &Fit, z: &DVector<f64>) -> DVector<f64> {
        match &fit.proj {
            Some(p) => p * z,
            None => z.clone(),
        }
    }

    /// Likelihood of the observations given latent values at every
    /// observation.
    pub fn data_loglik(&self, z: &DVector<f64>, h: &NuisanceBlock) -> Result<f64> {
        if !self.use_likelihood {
            return Ok(0.0);
        }
        match &self.target {
            Target::Count(s) => loglik_negbin(s, z.as_slice(), h.tau),
            Target::Cox { time, event } => loglik_cox_partial(time, event, z.as_slice()),
            Target::Logit(t) => loglik_logit(t, z.as_slice()),
            Target::Regression(_) | Target::Probit(_) => Ok(0.0),
        }
    }

    /// Derivatives of [`data_loglik`](Self::data_loglik) in the latent
    /// values; `None` for models without a sampled non-Gaussian latent.
    pub fn data_curvature(&self, z: &DVector<f64>, h: &NuisanceBlock) -> Result<Option<Curvature>> {
        if !self.use_likelihood {
            return Ok(Some(Curvature {
                grad: DVector::zeros(z.len()),
                neg_hess: DMatrix::zeros(z.len(), z.len()),
            }));
        }
        Ok(Some(match &self.target {
            Target::Count(s) => curvature_negbin(s, z.as_slice(), h.tau)?,
            Target::Cox { time, event } => curvature_cox(time, event, z.as_slice())?,
            Target::Logit(t) => curvature_logit(t, z.as_slice())?,
            Target::Regression(_) | Target::Probit(_) => return Ok(None),
        }))
    }

    pub fn evaluate(
        &self,
        cov: &[DMatrix<f64>],
        h: &NuisanceBlock,
        latent: Option<&LatentState>,
    ) -> Result<Fit> {
        match &self.target {
            Target::Regression(y) => {
                let gauss = if !self.use_likelihood {
                    0.0
                } else if self.geom.projected() {
                    loglik_regression_projected(y, &cov[0], &cov[1], h.r)?
                } else {
                    loglik_gaussian_noise(y, &cov[0], h.r)?
                };
                Ok(Fit {
                    gauss,
                    data: 0.0,
                    factor: None,
                    proj: None,
                })
            }
            Target::Probit(_) => {
                let f = factorize(&self.with_jitter(&cov[0], 1.0))?;
                let aug = latent
                    .and_then(|l| l.aug_y.as_ref())
                    .ok_or_else(|| Error::InvalidParameter("probit state lacks augmented responses".into()))?;
                let gauss = if self.use_likelihood {
                    mvn_log_density(aug, &f)
                } else {
                    0.0
                };
                Ok(Fit {
                    gauss,
                    data: 0.0,
                    factor: Some(f),
                    proj: None,
                })
            }
            _ => {
                let z = &latent
                    .ok_or_else(|| Error::InvalidParameter("latent model state lacks z".into()))?
                    .z;
                let f = factorize(&self.with_jitter(&cov[0], self.spec.latent_jitter))?;
                let gauss = mvn_log_density(z, &f);
                let proj = if self.geom.projected() {
                    Some(f.solve_mat(&cov[1]).transpose())
                } else {
                    None
                };
                let mut fit = Fit {
                    gauss,
                    data: 0.0,
                    factor: Some(f),
                    proj,
                };
                let zf = self.latent_full(&fit, z);
                fit.data = self.data_loglik(&zf, h)?;
                Ok(fit)
            }
        }
    }

    /// Log prior of the covariance and nuisance parameters.
    pub fn log_prior(&self, params: &KernelParams, h: &NuisanceBlock) -> Result<f64> {
        let pr = &self.prior;
        let mut lp = logprior_selection(params, pr)?;
        if !self.fixed_lambda_a() {
            lp += pr.lambda_a.log_density(params.lambda_a)?;
        }
        for (i, t) in params.terms.iter().enumerate() {
            let g = if i == 0 { pr.lambda_z } else { pr.lambda_z2 };
            lp += g.log_density(t.lambda_z)?;
        }
        if self.has_r() {
            lp += pr.r.log_density(h.r)?;
        }
        if self.has_tau() {
            lp += pr.tau.log_density(h.tau)?;
        }
        if self.spec.update_nu {
            lp += pr.nu.log_density(params.nu)?;
        }
        Ok(lp)
    }
}
