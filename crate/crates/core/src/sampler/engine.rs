//! The chain: initialization, selection moves, precision, nuisance and
//! latent updates, burn-in tuning and trace recording.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::dataset::ModelData;
use crate::kernel::{factorize, Factor, KernelFamily, KernelParams};
use crate::likelihood::{gibbs_update_probit_latents, mvn_log_density, LatentState, NuisanceBlock};
use crate::prior::PriorConfig;
use crate::{Error, Result};

use super::adaptive::AdaptiveAlpha;
use super::state::{ChainState, Fit, Model, Target, TermCache};
use super::trace::{BlockRate, MoveKind, MoveRecord, PosteriorTrace, TraceRecord};
use super::{validate_combination, KeepMode, LatentCoupling, ModelSpec, SamplerConfig, Scheme};

/// Blocks whose proposals are tuned toward the target acceptance window.
const TUNED: [&str; 7] = ["lambda_a", "lambda_z", "lambda_z2", "r", "tau", "nu", "z"];
const TARGET_LOW: f64 = 0.4;
const TARGET_HIGH: f64 = 0.6;
const TUNE_EVERY: usize = 50;
const LAPLACE_MAX_NEWTON: usize = 30;

#[derive(Clone, Debug)]
struct Current {
    state: ChainState,
    terms: Vec<TermCache>,
    cov: Vec<DMatrix<f64>>,
    fit: Fit,
    log_prior: f64,
}

impl Current {
    fn log_post(&self) -> f64 {
        self.fit.total() + self.log_prior
    }
}

/// A selection unit: predictor `k` in the listed kernel terms. Under the
/// joint two-term prior a unit spans both terms.
#[derive(Clone, Debug)]
struct Unit {
    k: usize,
    terms: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Count {
    accepted: u64,
    proposed: u64,
}

#[derive(Clone, Copy, Debug)]
enum Scalar {
    LambdaA,
    LambdaZ(usize),
    R,
    Tau,
}

impl Scalar {
    fn block(self) -> &'static str {
        match self {
            Scalar::LambdaA => "lambda_a",
            Scalar::LambdaZ(0) => "lambda_z",
            Scalar::LambdaZ(_) => "lambda_z2",
            Scalar::R => "r",
            Scalar::Tau => "tau",
        }
    }
}

type Change = (usize, usize, Option<f64>);

/// Gaussian approximation `N(mode, precision⁻¹)` of the latent conditional.
#[derive(Clone, Debug)]
struct Laplace {
    mode: DVector<f64>,
    precision: Factor,
}

impl Laplace {
    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let u = DVector::from_fn(self.mode.len(), |_, _| StandardNormal.sample(rng));
        &self.mode + self.precision.solve_upper(&u)
    }

    fn log_density(&self, z: &DVector<f64>) -> f64 {
        let d = z - &self.mode;
        let n = d.len() as f64;
        -0.5 * (self.precision.mul_lower_transpose(&d).norm_squared() + n * (2.0 * std::f64::consts::PI).ln()
            - self.precision.log_det())
    }
}

pub struct Sampler<'a> {
    data: &'a ModelData,
    model: Model,
    config: SamplerConfig,
    rng: ChaCha8Rng,
    cur: Current,
    units: Vec<Unit>,
    z_step: f64,
    nu_step: f64,
    shapes: BTreeMap<&'static str, f64>,
    totals: BTreeMap<&'static str, Count>,
    window: BTreeMap<&'static str, Count>,
    moves: Vec<MoveRecord>,
    adapt: AdaptiveAlpha,
    iteration: usize,
    failed: u64,
    laplace_cache: Option<Laplace>,
}

impl<'a> Sampler<'a> {
    /// Set up a chain: selection bits drawn from the inclusion prior,
    /// included `ρ`'s uniform, precisions and nuisance parameters at their
    /// prior means and latent values at 0.
    pub fn new(
        data: &'a ModelData,
        spec: ModelSpec,
        prior: PriorConfig,
        config: SamplerConfig,
    ) -> Result<Self> {
        validate_combination(data.response.kind(), &spec, &config)?;
        prior.validate(data.p())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(config.chain);
        let family = spec.family;
        let model = Model::new(data, spec, prior, config.projection, config.seed, config.use_likelihood)?;
        let p = data.p();

        let units: Vec<Unit> = match family {
            KernelFamily::Exp2Separate => (0..2)
                .flat_map(|t| (0..p).map(move |k| Unit { k, terms: vec![t] }))
                .collect(),
            KernelFamily::Exp2Joint => (0..p).map(|k| Unit { k, terms: vec![0, 1] }).collect(),
            _ => (0..p).map(|k| Unit { k, terms: vec![0] }).collect(),
        };

        let pr = &model.prior;
        let mut params = KernelParams::new(family, p);
        params.nu = model.spec.nu;
        params.lambda_a = if model.fixed_lambda_a() {
            model.spec.cox_lambda_a
        } else {
            pr.lambda_a.mean()
        };
        for (t, term) in params.terms.iter_mut().enumerate() {
            term.lambda_z = if t == 0 { pr.lambda_z.mean() } else { pr.lambda_z2.mean() };
        }
        for u in &units {
            if rng.random::<f64>() < pr.inclusion.marginal_alpha(u.k) {
                for &t in &u.terms {
                    params.set(t, u.k, Some(rng.random()));
                }
            }
        }
        let h = NuisanceBlock {
            r: pr.r.mean(),
            tau: pr.tau.mean(),
        };
        let latent = match (&model.target, model.latent_dim()) {
            (Target::Probit(t), Some(n)) => {
                let z = DVector::zeros(n);
                let aug = gibbs_update_probit_latents(t, z.as_slice(), &mut rng);
                Some(LatentState {
                    z,
                    aug_y: Some(DVector::from_vec(aug)),
                })
            }
            (_, Some(n)) => Some(LatentState {
                z: DVector::zeros(n),
                aug_y: None,
            }),
            (_, None) => None,
        };

        let cur = build_current(&model, params, h, latent)?;
        let shape = config.lambda_proposal_shape;
        let n_units = units.len();
        Ok(Sampler {
            data,
            z_step: config.z_step,
            nu_step: 0.2,
            shapes: TUNED[..5].iter().map(|&b| (b, shape)).collect(),
            model,
            config,
            rng,
            cur,
            units,
            totals: BTreeMap::new(),
            window: BTreeMap::new(),
            moves: Vec::new(),
            adapt: AdaptiveAlpha::new(n_units),
            iteration: 0,
            failed: 0,
            laplace_cache: None,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.cur.state
    }

    /// Replace the covariance and nuisance parameters (for warm starts or
    /// conditioning on fixed values). Latent values are kept.
    pub fn set_state(&mut self, params: KernelParams, h: NuisanceBlock) -> Result<()> {
        params.validate()?;
        h.validate()?;
        if params.family != self.model.spec.family || params.p() != self.model.p {
            return Err(Error::Dimension("state does not match the model".into()));
        }
        let latent = self.cur.state.latent.clone();
        self.cur = build_current(&self.model, params, h, latent)?;
        self.laplace_cache = None;
        Ok(())
    }

    /// Current proposal settings: latent step, Matérn step and Gamma shapes.
    pub fn tuning(&self) -> Vec<(String, f64)> {
        let mut out = vec![("z_step".to_owned(), self.z_step)];
        if self.model.spec.update_nu {
            out.push(("nu_step".to_owned(), self.nu_step));
        }
        out.extend(self.shapes.iter().map(|(k, v)| (format!("shape_{k}"), *v)));
        out
    }

    /// Run the configured number of iterations and collect the trace.
    pub fn run(mut self) -> Result<PosteriorTrace> {
        let start = Instant::now();
        let cfg = self.config.clone();
        let mut records = Vec::with_capacity(cfg.retained());
        let mut z_sum: Option<DVector<f64>> = None;
        let mut z_count = 0usize;
        for it in 0..cfg.iters {
            self.step().map_err(|e| Error::Aborted {
                iteration: it,
                source: Box::new(e),
            })?;
            if it >= cfg.burnin {
                if let Some(zf) = self.latent_at_observations() {
                    match &mut z_sum {
                        Some(s) => *s += &zf,
                        None => z_sum = Some(zf),
                    }
                    z_count += 1;
                }
                if (it - cfg.burnin + 1) % cfg.thin == 0 {
                    records.push(TraceRecord {
                        iteration: it,
                        params: self.cur.state.params.clone(),
                        h: self.cur.state.h,
                        z: if cfg.store_latent {
                            self.latent_at_observations().map(|z| z.as_slice().to_vec())
                        } else {
                            None
                        },
                    });
                }
            }
        }
        let wall_time = start.elapsed().as_secs_f64();

        let mut warnings = Vec::new();
        let rates: Vec<BlockRate> = self
            .totals
            .iter()
            .map(|(&name, c)| BlockRate {
                name: name.to_owned(),
                accepted: c.accepted,
                proposed: c.proposed,
            })
            .collect();
        for b in &rates {
            let r = b.rate();
            if TUNED.contains(&b.name.as_str()) && b.proposed > 0 && !(TARGET_LOW..=TARGET_HIGH).contains(&r) {
                warnings.push(format!(
                    "acceptance rate of {} is {:.2}, outside [{TARGET_LOW:.2}, {TARGET_HIGH:.2}]",
                    b.name, r
                ));
            }
        }
        if self.failed > 0 {
            warnings.push(format!(
                "{} proposals rejected because their covariance could not be evaluated",
                self.failed
            ));
        }
        for w in &warnings {
            log::warn!("chain {}: {w}", cfg.chain);
        }
        Ok(PosteriorTrace {
            family: self.model.spec.family,
            kind: self.model.kind,
            names: self.data.names.clone(),
            records,
            moves: self.moves,
            rates,
            latent_mean: z_sum.map(|s| (s / z_count as f64).as_slice().to_vec()),
            warnings,
            wall_time,
            seed: cfg.seed,
            chain: cfg.chain,
        })
    }

    /// One iteration: the selection step of the configured scheme, then
    /// precisions, nuisance parameters and latent values.
    pub fn step(&mut self) -> Result<()> {
        let b = self.config.blocks;
        if b.selection {
            match self.config.scheme {
                Scheme::One => self.scheme1_step(),
                Scheme::Two | Scheme::TwoAdaptive => self.scheme2_sweep(),
            }
        }
        if b.precisions {
            if !self.model.fixed_lambda_a() {
                self.scalar_move(Scalar::LambdaA);
            }
            for t in 0..self.cur.state.params.terms.len() {
                self.scalar_move(Scalar::LambdaZ(t));
            }
        }
        if b.nuisance {
            if self.model.has_r() {
                self.scalar_move(Scalar::R);
            }
            if self.model.has_tau() {
                self.scalar_move(Scalar::Tau);
            }
            if self.model.spec.update_nu {
                self.nu_move();
            }
        }
        if b.latent {
            self.update_latent()?;
        }
        let it = self.iteration;
        if self.config.autotune && it < self.config.burnin && (it + 1) % TUNE_EVERY == 0 {
            self.autotune();
        }
        self.iteration += 1;
        Ok(())
    }

    fn latent_at_observations(&self) -> Option<DVector<f64>> {
        let l = self.cur.state.latent.as_ref()?;
        Some(self.model.latent_full(&self.cur.fit, &l.z))
    }

    fn unit_included(&self, u: usize) -> bool {
        let unit = &self.units[u];
        self.cur.state.params.terms[unit.terms[0]].gamma[unit.k]
    }

    fn include_changes(&mut self, u: usize, out: &mut Vec<Change>) {
        let k = self.units[u].k;
        for i in 0..self.units[u].terms.len() {
            let t = self.units[u].terms[i];
            out.push((t, k, Some(self.rng.random())));
        }
    }

    fn exclude_changes(&self, u: usize, out: &mut Vec<Change>) {
        let unit = &self.units[u];
        out.extend(unit.terms.iter().map(|&t| (t, unit.k, None)));
    }

    fn count(&mut self, block: &'static str, accepted: bool) {
        for map in [&mut self.totals, &mut self.window] {
            let c = map.entry(block).or_default();
            c.proposed += 1;
            c.accepted += u64::from(accepted);
        }
    }

    fn log_move(&mut self, kind: MoveKind, accepted: bool) {
        self.moves.push(MoveRecord {
            iteration: self.iteration as u32,
            kind,
            accepted,
        });
    }

    /// Metropolis–Hastings test of a candidate against the current state.
    /// `log_q` is `log q(current | candidate) - log q(candidate | current)`.
    fn mh(&mut self, block: &'static str, cand: Result<Current>, log_q: f64) -> bool {
        let accepted = match cand {
            Ok(c) => {
                let a = c.log_post() - self.cur.log_post() + log_q;
                let ok = a >= 0.0 || self.rng.random::<f64>().ln() < a;
                if ok {
                    self.cur = c;
                    self.laplace_cache = None;
                }
                ok
            }
            Err(e) => {
                log::debug!("rejected {block} proposal: {e}");
                self.failed += 1;
                false
            }
        };
        self.count(block, accepted);
        accepted
    }

    /// MH test of a candidate covariance. For latent models whose `z` is
    /// not drawn exactly, the whitened coupling carries `z` along as
    /// `L' L⁻¹ z`; the Jacobian of that map enters `log_q`.
    fn mh_cov(&mut self, block: &'static str, cand: Result<Current>, log_q: f64) -> bool {
        if self.cur.state.latent.is_none() || self.model.is_probit() {
            return self.mh(block, cand, log_q);
        }
        let whiten = match self.config.latent_coupling {
            LatentCoupling::Centered => false,
            LatentCoupling::Whitened => true,
            LatentCoupling::Mixed => self.rng.random::<bool>(),
            LatentCoupling::Laplace => return self.mh_laplace(block, cand, log_q),
        };
        if !whiten {
            return self.mh(block, cand, log_q);
        }
        let moved = cand.and_then(|c| self.carry_latent(c));
        match moved {
            Ok((c, jac)) => self.mh(block, Ok(c), log_q + jac),
            Err(e) => self.mh(block, Err(e), log_q),
        }
    }

    /// Joint proposal: the covariance candidate with a fresh `z` from the
    /// Laplace approximation under it; the reverse move draws from the
    /// approximation under the current covariance.
    fn mh_laplace(&mut self, block: &'static str, cand: Result<Current>, log_q: f64) -> bool {
        let joint = cand.and_then(|mut c| {
            let here = self.current_laplace()?;
            let z = self.cur.state.latent.as_ref().expect("latent model").z.clone();
            let there = self.laplace(&c.fit, &c.state.h, here.mode.clone())?;
            let zn = there.draw(&mut self.rng);
            let factor = c.fit.factor.as_ref().expect("latent models keep a factor");
            c.fit.gauss = mvn_log_density(&zn, factor);
            c.fit.data = self.model.data_loglik(&self.model.latent_full(&c.fit, &zn), &c.state.h)?;
            let q = here.log_density(&z) - there.log_density(&zn);
            c.state.latent.as_mut().expect("latent model").z = zn;
            c.state.log_post = c.log_post();
            Ok((c, q, there))
        });
        match joint {
            Ok((c, q, there)) => {
                let ok = self.mh(block, Ok(c), log_q + q);
                if ok {
                    self.laplace_cache = Some(there);
                }
                ok
            }
            Err(e) => self.mh(block, Err(e), log_q),
        }
    }

    fn carry_latent(&self, mut cand: Current) -> Result<(Current, f64)> {
        let old = self.cur.fit.factor.as_ref().expect("latent models keep a factor");
        let new = cand.fit.factor.as_ref().expect("latent models keep a factor");
        let latent = cand.state.latent.as_mut().expect("latent model");
        let u = old.solve_lower(&latent.z);
        let z = new.mul_lower(&u);
        cand.fit.gauss = mvn_log_density(&z, new);
        let jac = 0.5 * (new.log_det() - old.log_det());
        cand.fit.data = self.model.data_loglik(&self.model.latent_full(&cand.fit, &z), &cand.state.h)?;
        latent.z = z;
        cand.state.log_post = cand.log_post();
        Ok((cand, jac))
    }

    /// Candidate with the given `ρ` changes (`None` excludes). Kernel terms
    /// are shifted one coordinate at a time.
    fn rho_candidate(&self, changes: &[Change]) -> Result<Current> {
        let old = &self.cur.state.params;
        let mut params = old.clone();
        for &(t, k, r) in changes {
            params.set(t, k, r);
        }
        let mut coords: Vec<usize> = changes.iter().map(|c| c.1).collect();
        coords.sort_unstable();
        coords.dedup();
        let mut terms = self.cur.terms.clone();
        for (t, term) in terms.iter_mut().enumerate() {
            let mut rho_step = old.terms[t].rho.clone();
            for &k in &coords {
                let (r_old, r_new) = (old.terms[t].rho[k], params.terms[t].rho[k]);
                if r_old != r_new {
                    rho_step[k] = r_new;
                    *term = self.model.shift_term(term, k, r_old, r_new, &rho_step, params.nu)?;
                }
            }
        }
        let cov = self.model.covariances(&params, &terms);
        let h = self.cur.state.h;
        let latent = self.cur.state.latent.clone();
        finish(&self.model, params, terms, cov, h, latent)
    }

    fn legal_moves(k: usize, units: usize) -> Vec<MoveKind> {
        let mut v = Vec::with_capacity(3);
        if k < units {
            v.push(MoveKind::Add);
        }
        if k > 0 {
            v.push(MoveKind::Delete);
        }
        if k > 0 && k < units {
            v.push(MoveKind::Swap);
        }
        v
    }

    fn scheme1_step(&mut self) {
        let n_units = self.units.len();
        let (incl, excl): (Vec<usize>, Vec<usize>) = (0..n_units).partition(|&u| self.unit_included(u));
        let k = incl.len();
        let legal = Self::legal_moves(k, n_units);
        let m_here = legal.len() as f64;
        let mv = legal[self.rng.random_range(0..legal.len())];
        let mut changes = Vec::new();
        let log_q = match mv {
            MoveKind::Add => {
                let u = excl[self.rng.random_range(0..excl.len())];
                self.include_changes(u, &mut changes);
                let m_there = Self::legal_moves(k + 1, n_units).len() as f64;
                (m_here / m_there).ln() + ((n_units - k) as f64 / (k + 1) as f64).ln()
            }
            MoveKind::Delete => {
                let u = incl[self.rng.random_range(0..incl.len())];
                self.exclude_changes(u, &mut changes);
                let m_there = Self::legal_moves(k - 1, n_units).len() as f64;
                (m_here / m_there).ln() + (k as f64 / (n_units - k + 1) as f64).ln()
            }
            _ => {
                let out = incl[self.rng.random_range(0..incl.len())];
                let inn = excl[self.rng.random_range(0..excl.len())];
                self.exclude_changes(out, &mut changes);
                self.include_changes(inn, &mut changes);
                0.0
            }
        };
        let cand = self.rho_candidate(&changes);
        let ok = self.mh_cov(mv.name(), cand, log_q);
        self.log_move(mv, ok);
        self.keep_move();
    }

    /// Refresh the included `ρ`'s from the uniform proposal.
    fn keep_move(&mut self) {
        let incl: Vec<usize> = (0..self.units.len()).filter(|&u| self.unit_included(u)).collect();
        match self.config.keep_mode {
            KeepMode::PerCoordinate => {
                for u in incl {
                    let mut changes = Vec::new();
                    self.include_changes(u, &mut changes);
                    let cand = self.rho_candidate(&changes);
                    let ok = self.mh_cov("keep", cand, 0.0);
                    self.log_move(MoveKind::Keep, ok);
                }
            }
            KeepMode::Joint => {
                if incl.is_empty() {
                    return;
                }
                let mut changes = Vec::new();
                for u in incl {
                    self.include_changes(u, &mut changes);
                }
                let cand = self.rho_candidate(&changes);
                let ok = self.mh_cov("keep", cand, 0.0);
                self.log_move(MoveKind::Keep, ok);
            }
        }
    }

    fn scheme2_sweep(&mut self) {
        let adaptive =
            self.config.scheme == Scheme::TwoAdaptive && self.adapt.count() >= self.config.adapt_warmup;
        for u in 0..self.units.len() {
            let g = self.unit_included(u);
            let mut changes = Vec::new();
            let log_q = if adaptive {
                let alpha = self.adapt.alpha(u);
                let proposed = self.rng.random::<f64>() < alpha;
                if proposed == g {
                    // Proposing the current bit leaves the state untouched.
                    self.log_move(MoveKind::Between, true);
                    None
                } else if g {
                    Some((alpha / (1.0 - alpha)).ln())
                } else {
                    Some(((1.0 - alpha) / alpha).ln())
                }
            } else {
                Some(0.0)
            };
            if let Some(log_q) = log_q {
                if g {
                    self.exclude_changes(u, &mut changes);
                } else {
                    self.include_changes(u, &mut changes);
                }
                let cand = self.rho_candidate(&changes);
                let ok = self.mh_cov("between", cand, log_q);
                self.log_move(MoveKind::Between, ok);
            }
            if self.unit_included(u) {
                let mut changes = Vec::new();
                self.include_changes(u, &mut changes);
                let cand = self.rho_candidate(&changes);
                let ok = self.mh_cov("within", cand, 0.0);
                self.log_move(MoveKind::Within, ok);
            }
        }
        let bits: Vec<bool> = (0..self.units.len()).map(|u| self.unit_included(u)).collect();
        self.adapt.observe(bits);
    }

    fn scalar_value(&self, which: Scalar) -> f64 {
        let s = &self.cur.state;
        match which {
            Scalar::LambdaA => s.params.lambda_a,
            Scalar::LambdaZ(t) => s.params.terms[t].lambda_z,
            Scalar::R => s.h.r,
            Scalar::Tau => s.h.tau,
        }
    }

    /// Gamma proposal centred on the current value, `x' ~ G(s, s/x)`.
    fn scalar_move(&mut self, which: Scalar) {
        let block = which.block();
        let x = self.scalar_value(which);
        let s = self.shapes[block];
        let xn = match Gamma::new(s, x / s) {
            Ok(g) => g.sample(&mut self.rng),
            Err(_) => f64::NAN,
        };
        if !(xn > 0.0 && xn.is_finite()) {
            self.count(block, false);
            return;
        }
        let log_q = (2.0 * s - 1.0) * (x.ln() - xn.ln()) + s * (xn / x - x / xn);
        let cand = self.scalar_candidate(which, xn);
        match which {
            Scalar::LambdaA | Scalar::LambdaZ(_) => self.mh_cov(block, cand, log_q),
            Scalar::R | Scalar::Tau => self.mh(block, cand, log_q),
        };
    }

    fn scalar_candidate(&self, which: Scalar, v: f64) -> Result<Current> {
        let cur = &self.cur;
        let mut params = cur.state.params.clone();
        let mut h = cur.state.h;
        match which {
            Scalar::LambdaA => params.lambda_a = v,
            Scalar::LambdaZ(t) => params.terms[t].lambda_z = v,
            Scalar::R => h.r = v,
            Scalar::Tau => {
                // Only the data likelihood depends on τ.
                h.tau = v;
                let mut c = cur.clone();
                c.state.h = h;
                if let Some(l) = &c.state.latent {
                    let zf = self.model.latent_full(&c.fit, &l.z);
                    c.fit.data = self.model.data_loglik(&zf, &h)?;
                }
                c.log_prior = self.model.log_prior(&c.state.params, &h)?;
                c.state.log_post = c.log_post();
                return Ok(c);
            }
        }
        let cov = match which {
            Scalar::R => cur.cov.clone(),
            _ => self.model.covariances(&params, &cur.terms),
        };
        finish(&self.model, params, cur.terms.clone(), cov, h, cur.state.latent.clone())
    }

    /// Log-normal random walk on the Matérn smoothness.
    fn nu_move(&mut self) {
        let nu = self.cur.state.params.nu;
        let step: f64 = StandardNormal.sample(&mut self.rng);
        let nu_new = nu * (self.nu_step * step).exp();
        let cand = (|| {
            let mut params = self.cur.state.params.clone();
            params.nu = nu_new;
            let terms = self.model.terms(&params)?;
            let cov = self.model.covariances(&params, &terms);
            finish(
                &self.model,
                params,
                terms,
                cov,
                self.cur.state.h,
                self.cur.state.latent.clone(),
            )
        })();
        self.mh_cov("nu", cand, nu_new.ln() - nu.ln());
    }

    fn update_latent(&mut self) -> Result<()> {
        if self.cur.state.latent.is_none() {
            return Ok(());
        }
        if self.model.is_probit() {
            return self.probit_gibbs();
        }
        let factor = self.cur.fit.factor.clone().expect("latent models keep a factor");
        let mut z = self.cur.state.latent.as_ref().map(|l| l.z.clone()).unwrap_or_default();
        let mut data = self.cur.fit.data;
        let h = self.cur.state.h;
        let eps = self.z_step;
        let shrink = (1.0 - eps * eps).sqrt();
        let mut moved = false;
        for _ in 0..self.config.z_reps {
            let u = DVector::from_fn(z.len(), |_, _| StandardNormal.sample(&mut self.rng));
            let zn = &z * shrink + factor.mul_lower(&u) * eps;
            let zf = self.model.latent_full(&self.cur.fit, &zn);
            let ok = match self.model.data_loglik(&zf, &h) {
                Ok(dn) => {
                    let a = dn - data;
                    let ok = a >= 0.0 || self.rng.random::<f64>().ln() < a;
                    if ok {
                        z = zn;
                        data = dn;
                        moved = true;
                    }
                    ok
                }
                Err(_) => false,
            };
            self.count("z", ok);
        }
        if moved {
            self.cur.fit.gauss = mvn_log_density(&z, &factor);
            self.cur.fit.data = data;
            if let Some(l) = self.cur.state.latent.as_mut() {
                l.z = z;
            }
            self.cur.state.log_post = self.cur.log_post();
        }
        if self.config.z_laplace {
            self.laplace_latent_move();
        }
        Ok(())
    }

    /// Laplace approximation of `z | θ, h, data` for the covariance held in
    /// `fit`, by damped Newton iterations started at `z`.
    fn laplace(&self, fit: &Fit, h: &NuisanceBlock, mut z: DVector<f64>) -> Result<Laplace> {
        let factor = fit.factor.as_ref().expect("latent models keep a factor");
        let m = z.len();
        let k_inv = factor.solve_mat(&DMatrix::identity(m, m));
        let k_inv = (&k_inv + k_inv.transpose()) * 0.5;
        let target = |z: &DVector<f64>| -> Result<f64> {
            let zf = self.model.latent_full(fit, z);
            Ok(self.model.data_loglik(&zf, h)? - 0.5 * z.dot(&(&k_inv * z)))
        };
        let precision = |z: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let zf = self.model.latent_full(fit, z);
            let c = self
                .model
                .data_curvature(&zf, h)?
                .ok_or_else(|| Error::WrongModel("no latent curvature".into()))?;
            Ok(match &fit.proj {
                Some(p) => (p.transpose() * c.grad, p.transpose() * c.neg_hess * p),
                None => (c.grad, c.neg_hess),
            })
        };
        let mut value = target(&z)?;
        for _ in 0..LAPLACE_MAX_NEWTON {
            let (g, w) = precision(&z)?;
            let a = factorize(&(&k_inv + &w))?;
            let full = a.solve(&(&w * &z + g));
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..20 {
                let zn = &z + (&full - &z) * step;
                if let Ok(v) = target(&zn) {
                    if v >= value - 1e-10 {
                        accepted = Some((zn, v));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((zn, v)) = accepted else { break };
            let delta = (&zn - &z).amax();
            z = zn;
            value = v;
            if delta < 1e-8 {
                break;
            }
        }
        let (_, w) = precision(&z)?;
        Ok(Laplace {
            precision: factorize(&(k_inv + w))?,
            mode: z,
        })
    }

    /// Laplace approximation at the current state, reusing the cached one
    /// while the covariance and `τ` are unchanged.
    fn current_laplace(&mut self) -> Result<Laplace> {
        if let Some(l) = &self.laplace_cache {
            return Ok(l.clone());
        }
        let z = self.cur.state.latent.as_ref().expect("latent model").z.clone();
        let l = self.laplace(&self.cur.fit, &self.cur.state.h, z)?;
        self.laplace_cache = Some(l.clone());
        Ok(l)
    }

    /// Independence MH proposal `z' ~ N(ẑ, A⁻¹)` from the Laplace
    /// approximation at the conditional mode `ẑ`.
    fn laplace_latent_move(&mut self) {
        let Some(z) = self.cur.state.latent.as_ref().map(|l| l.z.clone()) else {
            return;
        };
        let proposal = self.current_laplace().and_then(|lap| {
            let zn = lap.draw(&mut self.rng);
            let zf = self.model.latent_full(&self.cur.fit, &zn);
            let data = self.model.data_loglik(&zf, &self.cur.state.h)?;
            let factor = self.cur.fit.factor.as_ref().expect("latent models keep a factor");
            let gauss = mvn_log_density(&zn, factor);
            let log_ratio = data + gauss - self.cur.fit.data - self.cur.fit.gauss + lap.log_density(&z)
                - lap.log_density(&zn);
            Ok((zn, data, gauss, log_ratio))
        });
        let ok = match proposal {
            Ok((zn, data, gauss, a)) => {
                let ok = a >= 0.0 || self.rng.random::<f64>().ln() < a;
                if ok {
                    self.cur.fit.data = data;
                    self.cur.fit.gauss = gauss;
                    if let Some(l) = self.cur.state.latent.as_mut() {
                        l.z = zn;
                    }
                    self.cur.state.log_post = self.cur.log_post();
                }
                ok
            }
            Err(e) => {
                log::debug!("latent mode search failed: {e}");
                false
            }
        };
        self.count("z_laplace", ok);
    }

    /// Exact draw of `z` given the augmented responses, then of the
    /// augmented responses given `z`.
    fn probit_gibbs(&mut self) -> Result<()> {
        let Target::Probit(t) = &self.model.target else {
            return Ok(());
        };
        let f = self.cur.fit.factor.clone().expect("probit keeps the factor of C + I");
        let aug = self
            .cur
            .state
            .latent
            .as_ref()
            .and_then(|l| l.aug_y.clone())
            .expect("probit keeps augmented responses");
        let n = aug.len();
        // z | aug ~ N(aug - (C+I)^{-1} aug, I - (C+I)^{-1})
        let inv = f.solve_mat(&DMatrix::identity(n, n));
        let mut cov = DMatrix::identity(n, n) - &inv;
        cov = (&cov + cov.transpose()) * 0.5;
        let g = factorize(&cov)?;
        let mean = &aug - f.solve(&aug);
        let u = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
        let z = mean + g.mul_lower(&u);
        let aug_new = DVector::from_vec(gibbs_update_probit_latents(t, z.as_slice(), &mut self.rng));
        if self.model.use_likelihood {
            self.cur.fit.gauss = mvn_log_density(&aug_new, &f);
        }
        self.cur.state.latent = Some(LatentState {
            z,
            aug_y: Some(aug_new),
        });
        self.cur.state.log_post = self.cur.log_post();
        Ok(())
    }

    fn autotune(&mut self) {
        let window = std::mem::take(&mut self.window);
        for (&block, c) in &window {
            if c.proposed == 0 || !TUNED.contains(&block) {
                continue;
            }
            let rate = c.accepted as f64 / c.proposed as f64;
            let wider = if rate > TARGET_HIGH {
                true
            } else if rate < TARGET_LOW {
                false
            } else {
                continue;
            };
            match block {
                "z" => {
                    self.z_step = if wider {
                        (self.z_step / 0.7).min(1.0)
                    } else {
                        (self.z_step * 0.7).max(1e-4)
                    }
                }
                "nu" => self.nu_step *= if wider { 1.0 / 0.7 } else { 0.7 },
                _ => {
                    if let Some(s) = self.shapes.get_mut(block) {
                        *s = if wider { (*s / 1.5).max(0.5) } else { (*s * 1.5).min(1e7) };
                    }
                }
            }
        }
    }
}

fn finish(
    model: &Model,
    params: KernelParams,
    terms: Vec<TermCache>,
    cov: Vec<DMatrix<f64>>,
    h: NuisanceBlock,
    latent: Option<LatentState>,
) -> Result<Current> {
    let fit = model.evaluate(&cov, &h, latent.as_ref())?;
    let log_prior = model.log_prior(&params, &h)?;
    let mut cur = Current {
        state: ChainState {
            params,
            h,
            latent,
            log_post: 0.0,
        },
        terms,
        cov,
        fit,
        log_prior,
    };
    cur.state.log_post = cur.log_post();
    Ok(cur)
}

fn build_current(
    model: &Model,
    params: KernelParams,
    h: NuisanceBlock,
    latent: Option<LatentState>,
) -> Result<Current> {
    let terms = model.terms(&params)?;
    let cov = model.covariances(&params, &terms);
    finish(model, params, terms, cov, h, latent)
}

/// Run one chain to completion.
pub fn run_chain(
    config: &SamplerConfig,
    data: &ModelData,
    spec: &ModelSpec,
    prior: &PriorConfig,
) -> Result<PosteriorTrace> {
    Sampler::new(data, spec.clone(), prior.clone(), config.clone())?.run()
}
