//! Run configuration: a flat `key = value` map assembled from built-in
//! defaults, an optional config file and command-line overrides, then
//! checked and turned into the typed settings of the core crate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gpvs::dataset::{ResponseKind, ResponseSpec, ScalingMethod};
use gpvs::kernel::KernelFamily;
use gpvs::prior::{GammaPrior, InclusionPrior, PriorConfig, Slab, TwoTermMode};
use gpvs::sampler::{BinaryLink, KeepMode, LatentCoupling, ModelSpec, SamplerConfig, Scheme};

/// Bad input from the user: unknown keys, unparsable values, invalid
/// combinations. Reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Every recognised key with its default, in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("data", ""),
    ("test", ""),
    ("holdout", "0"),
    ("kind", "continuous"),
    ("response", "y"),
    ("time_column", "time"),
    ("event_column", "event"),
    ("scaling", "unit-cube"),
    ("family", "exp1"),
    ("link", "probit"),
    ("nu", "2.5"),
    ("update_nu", "false"),
    ("cox_lambda_a", "100"),
    ("latent_jitter", "0.01"),
    ("slab", "uniform"),
    ("slab_a", "1"),
    ("slab_b", "1"),
    ("inclusion", "fixed"),
    ("alpha", "0.025"),
    ("two_term_mode", "separate"),
    ("gamma_parameterization", "rate"),
    ("lambda_a_prior", "1,1"),
    ("lambda_z_prior", "1,1"),
    ("lambda_z2_prior", "1,1"),
    ("r_prior", "2,0.1"),
    ("tau_prior", "1,1"),
    ("nu_prior", "1,1"),
    ("scheme", "two"),
    ("iters", "5000"),
    ("burnin", "1000"),
    ("thin", "1"),
    ("z_reps", "5"),
    ("z_step", "0.3"),
    ("lambda_proposal_shape", "10"),
    ("autotune", "true"),
    ("projection_ratio", "none"),
    ("seed", "1"),
    ("chains", "1"),
    ("first_chain", "0"),
    ("keep_mode", "per-coordinate"),
    ("latent_coupling", "laplace"),
    ("z_laplace", "true"),
    ("adapt_warmup", "100"),
    ("use_likelihood", "true"),
];

/// Keys a manifest carries that describe the finished run rather than its
/// configuration; skipped when a manifest is read back as a config.
fn is_run_output(key: &str) -> bool {
    matches!(key, "retained" | "wall_time_seconds" | "predictors") || key.contains('.')
}

#[derive(Clone, Debug)]
pub struct Settings {
    values: BTreeMap<String, String>,
    explicit: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            explicit: BTreeMap::new(),
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let key = key.trim().replace('-', "_");
        if !self.values.contains_key(&key) {
            return Err(usage(format!("unknown config key `{key}`")));
        }
        let value = value.trim().to_owned();
        self.values.insert(key.clone(), value.clone());
        self.explicit.insert(key, value);
        Ok(())
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> anyhow::Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("expected KEY=VALUE, got `{pair}`")))?;
        self.set(k, v)
    }

    pub fn load_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                usage(format!("{}:{}: expected `key = value`", path.display(), i + 1))
            })?;
            if is_run_output(k.trim()) {
                continue;
            }
            self.set(k, v)
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse::<T>()
            .map_err(|e| usage(format!("bad value `{v}` for `{key}`: {e}")))
    }

    fn flag(&self, key: &str) -> anyhow::Result<bool> {
        match self.get(key).to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            other => Err(usage(format!("bad value `{other}` for `{key}`: expected true or false"))),
        }
    }

    fn pair(&self, key: &str) -> anyhow::Result<(f64, f64)> {
        let v = self.get(key);
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(usage(format!("bad value `{v}` for `{key}`: expected two numbers"))),
            },
            _ => Err(usage(format!("bad value `{v}` for `{key}`: expected `shape,rate`"))),
        }
    }

    /// Whether a key has any effect under the chosen model; inapplicable
    /// keys are rejected when set and left out of the echo.
    fn applicable(&self, key: &str) -> bool {
        let kind = self.get("kind").parse::<ResponseKind>().ok();
        let family = self.get("family").parse::<KernelFamily>().ok();
        let two_terms = family.is_some_and(|f| f.n_terms() == 2);
        let latent = matches!(kind, Some(ResponseKind::Binary | ResponseKind::Count | ResponseKind::Survival));
        match key {
            "time_column" | "event_column" | "cox_lambda_a" => kind == Some(ResponseKind::Survival),
            "response" => kind != Some(ResponseKind::Survival),
            "link" => kind == Some(ResponseKind::Binary),
            "nu" | "update_nu" | "nu_prior" => family == Some(KernelFamily::Matern),
            "lambda_z2_prior" => two_terms,
            "two_term_mode" => family == Some(KernelFamily::Exp2Separate),
            "slab_a" | "slab_b" => self.get("slab") == "beta",
            "r_prior" => kind == Some(ResponseKind::Continuous),
            "tau_prior" => kind == Some(ResponseKind::Count),
            "latent_jitter" | "z_reps" | "z_step" | "latent_coupling" | "z_laplace" => latent,
            "keep_mode" => self.get("scheme").parse::<Scheme>().ok() == Some(Scheme::One),
            "adapt_warmup" => self.get("scheme").parse::<Scheme>().ok() == Some(Scheme::TwoAdaptive),
            _ => true,
        }
    }

    /// The configuration as `key = value` pairs, applicable keys only.
    pub fn echo(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .filter(|(k, _)| self.applicable(k))
            .map(|(k, _)| (k.to_string(), self.get(k).to_owned()))
            .collect()
    }

    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        for key in self.explicit.keys() {
            if !self.applicable(key) {
                return Err(usage(format!(
                    "`{key}` does not apply to a {} model with the {} kernel",
                    self.get("kind"),
                    self.get("family")
                )));
            }
        }
        let kind: ResponseKind = self.parse("kind")?;
        let family: KernelFamily = self.parse("family")?;
        let response = match kind {
            ResponseKind::Survival => ResponseSpec::survival(self.get("time_column"), self.get("event_column")),
            k => ResponseSpec::new(k, self.get("response")),
        };

        let model = ModelSpec {
            family,
            link: self.parse::<BinaryLink>("link")?,
            cox_lambda_a: self.parse("cox_lambda_a")?,
            latent_jitter: self.parse("latent_jitter")?,
            nu: self.parse("nu")?,
            update_nu: self.flag("update_nu")?,
        };

        let gamma = |key: &str| -> anyhow::Result<GammaPrior> {
            let (shape, second) = self.pair(key)?;
            let g = match self.get("gamma_parameterization") {
                "rate" => GammaPrior::new(shape, second),
                "scale" => GammaPrior::from_scale(shape, second),
                other => {
                    return Err(usage(format!(
                        "bad value `{other}` for `gamma_parameterization`: expected rate or scale"
                    )))
                }
            };
            if !(g.shape > 0.0 && g.rate > 0.0 && g.shape.is_finite() && g.rate.is_finite()) {
                return Err(usage(format!("`{key}` needs positive shape and rate")));
            }
            Ok(g)
        };
        let slab = match self.get("slab") {
            "uniform" => Slab::Uniform,
            "beta" => Slab::Beta {
                a: self.parse("slab_a")?,
                b: self.parse("slab_b")?,
            },
            other => return Err(usage(format!("bad value `{other}` for `slab`: expected uniform or beta"))),
        };
        let inclusion = match self.get("inclusion") {
            "fixed" => InclusionPrior::FixedAlpha(self.parse("alpha")?),
            "beta-bernoulli" => InclusionPrior::BetaBernoulli {
                mean: self.parse("alpha")?,
            },
            "per-coordinate" => InclusionPrior::PerCoordinate(
                self.get("alpha")
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| usage("`alpha` must be a comma-separated list for per-coordinate inclusion"))?,
            ),
            other => {
                return Err(usage(format!(
                    "bad value `{other}` for `inclusion`: expected fixed, beta-bernoulli or per-coordinate"
                )))
            }
        };
        let two_term_mode = match self.get("two_term_mode") {
            "separate" => TwoTermMode::Separate,
            "joint-product" => TwoTermMode::JointProduct,
            other => {
                return Err(usage(format!(
                    "bad value `{other}` for `two_term_mode`: expected separate or joint-product"
                )))
            }
        };
        let prior = PriorConfig {
            slab,
            inclusion,
            lambda_a: gamma("lambda_a_prior")?,
            lambda_z: gamma("lambda_z_prior")?,
            lambda_z2: gamma("lambda_z2_prior")?,
            r: gamma("r_prior")?,
            tau: gamma("tau_prior")?,
            nu: gamma("nu_prior")?,
            two_term_mode,
        };

        let projection = match self.get("projection_ratio") {
            "" | "none" => None,
            _ => Some(self.parse::<f64>("projection_ratio")?),
        };
        let sampler = SamplerConfig {
            scheme: self.parse("scheme")?,
            iters: self.parse("iters")?,
            burnin: self.parse("burnin")?,
            thin: self.parse("thin")?,
            z_reps: self.parse("z_reps")?,
            z_step: self.parse("z_step")?,
            lambda_proposal_shape: self.parse("lambda_proposal_shape")?,
            autotune: self.flag("autotune")?,
            projection,
            seed: self.parse("seed")?,
            chain: self.parse("first_chain")?,
            keep_mode: self.parse::<KeepMode>("keep_mode")?,
            latent_coupling: self.parse::<LatentCoupling>("latent_coupling")?,
            z_laplace: self.flag("z_laplace")?,
            adapt_warmup: self.parse("adapt_warmup")?,
            use_likelihood: self.flag("use_likelihood")?,
            ..SamplerConfig::default()
        };
        gpvs::sampler::validate_combination(kind, &model, &sampler).map_err(|e| usage(e.to_string()))?;

        let chains: usize = self.parse("chains")?;
        if chains == 0 {
            return Err(usage("`chains` must be at least 1"));
        }
        let path = |key: &str| (!self.get(key).is_empty()).then(|| PathBuf::from(self.get(key)));
        let holdout: f64 = self.parse("holdout")?;
        if !(0.0..1.0).contains(&holdout) {
            return Err(usage("`holdout` must lie in [0, 1)"));
        }
        if holdout > 0.0 && path("test").is_some() {
            return Err(usage("set either `test` or `holdout`, not both"));
        }
        Ok(RunConfig {
            kind,
            response,
            scaling: self.parse::<ScalingMethod>("scaling")?,
            model,
            prior,
            sampler,
            chains,
            data: path("data"),
            test: path("test"),
            holdout,
        })
    }
}

/// Typed, validated run settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kind: ResponseKind,
    pub response: ResponseSpec,
    pub scaling: ScalingMethod,
    pub model: ModelSpec,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub chains: usize,
    pub data: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Fraction of the data rows held out for `predict`; 0 keeps all.
    pub holdout: f64,
}
