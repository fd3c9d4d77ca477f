//! Synthetic benchmark datasets: uniform predictors, a handful of which
//! drive a latent signal, and a response of any supported kind built from
//! that signal.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson, StandardNormal};
use statrs::function::erf::erfc;

use crate::dataset::{ModelData, Response, ResponseKind, ScalingMethod};
use crate::{Error, Result};

/// Latent signal as a function of the leading predictors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimKernel {
    /// `x1 + x2 + sin(3 x3) + sin(5 x4)`.
    Small4,
    /// `a1 x1 + a2 x2 + a3 x3 + a4 x4 + a5 sin(a6 x5) + a7 sin(a8 x6)` with
    /// coefficients depending on the response kind.
    LargeP,
    /// `x1 + 0.8 x2 + 1.3 x3 + sin(x4) + sin(3 x5) + sin(5 x6) + (1.5 x7)(1.5 x8)`.
    MixedNonlinear,
    /// `x1 + x2 + sin(1.5 x3) sin(1.5 x4) + sin(3 x5) + sin(3 x6) + (1.5 x7)(1.5 x8)`.
    Sensitivity,
}

impl SimKernel {
    pub fn name(self) -> &'static str {
        match self {
            SimKernel::Small4 => "small4",
            SimKernel::LargeP => "large-p",
            SimKernel::MixedNonlinear => "mixed",
            SimKernel::Sensitivity => "sensitivity",
        }
    }

    /// Number of leading predictors the signal depends on.
    pub fn n_true(self) -> usize {
        match self {
            SimKernel::Small4 => 4,
            SimKernel::LargeP => 6,
            SimKernel::MixedNonlinear | SimKernel::Sensitivity => 8,
        }
    }

    /// Zero-based indices of the predictors in the signal.
    pub fn truth(self) -> Vec<usize> {
        (0..self.n_true()).collect()
    }

    /// Noise standard deviation used for continuous responses unless
    /// overridden.
    pub fn default_sigma(self) -> f64 {
        match self {
            SimKernel::Sensitivity => 0.28,
            _ => 0.05,
        }
    }

    /// Coefficients `a1..a8` of [`SimKernel::LargeP`].
    pub fn large_p_coefficients(kind: ResponseKind) -> [f64; 8] {
        match kind {
            ResponseKind::Count => [1.6, 1.6, 1.6, 1.6, 1.0, 3.0, 1.0, 5.0],
            ResponseKind::Survival => [3.0, -2.5, 3.5, -3.0, 1.0, 3.0, -1.0, 5.0],
            _ => [1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 5.0],
        }
    }

    /// Noise-free signal at one row of predictors (at least
    /// [`n_true`](Self::n_true) entries).
    pub fn eval(self, kind: ResponseKind, x: &[f64]) -> f64 {
        match self {
            SimKernel::Small4 => x[0] + x[1] + (3.0 * x[2]).sin() + (5.0 * x[3]).sin(),
            SimKernel::LargeP => {
                let a = Self::large_p_coefficients(kind);
                a[0] * x[0]
                    + a[1] * x[1]
                    + a[2] * x[2]
                    + a[3] * x[3]
                    + a[4] * (a[5] * x[4]).sin()
                    + a[6] * (a[7] * x[5]).sin()
            }
            SimKernel::MixedNonlinear => {
                x[0] + 0.8 * x[1]
                    + 1.3 * x[2]
                    + x[3].sin()
                    + (3.0 * x[4]).sin()
                    + (5.0 * x[5]).sin()
                    + (1.5 * x[6]) * (1.5 * x[7])
            }
            SimKernel::Sensitivity => {
                x[0] + x[1]
                    + (1.5 * x[2]).sin() * (1.5 * x[3]).sin()
                    + (3.0 * x[4]).sin()
                    + (3.0 * x[5]).sin()
                    + (1.5 * x[6]) * (1.5 * x[7])
            }
        }
    }
}

impl std::str::FromStr for SimKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small4" => Ok(SimKernel::Small4),
            "large-p" | "large_p" | "largep" => Ok(SimKernel::LargeP),
            "mixed" | "mixed-nonlinear" | "mixed_nonlinear" => Ok(SimKernel::MixedNonlinear),
            "sensitivity" => Ok(SimKernel::Sensitivity),
            other => Err(Error::Config(format!("unknown simulation kernel `{other}`"))),
        }
    }
}

/// Equicorrelated Gaussian copula over randomly chosen nuisance columns.
/// Marginals stay Uniform(0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Copula {
    pub columns: usize,
    pub correlation: f64,
}

impl Default for Copula {
    fn default() -> Self {
        Copula {
            columns: 20,
            correlation: 0.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub kernel: SimKernel,
    pub kind: ResponseKind,
    pub n: usize,
    pub p: usize,
    /// Noise sd added to the signal for continuous and binary responses.
    pub sigma: f64,
    pub seed: u64,
    /// Probability that a survival observation is censored.
    pub censor_rate: f64,
    /// Rate of the exponential baseline hazard for survival responses.
    pub baseline_rate: f64,
    pub copula: Option<Copula>,
}

impl SimSpec {
    pub fn new(kernel: SimKernel, kind: ResponseKind, n: usize, p: usize, seed: u64) -> Self {
        SimSpec {
            kernel,
            kind,
            n,
            p,
            sigma: kernel.default_sigma(),
            seed,
            censor_rate: 0.05,
            baseline_rate: 0.2,
            copula: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.p < self.kernel.n_true() {
            return bad(format!(
                "kernel {} needs p >= {}, got {}",
                self.kernel.name(),
                self.kernel.n_true(),
                self.p
            ));
        }
        let noisy = matches!(self.kind, ResponseKind::Continuous | ResponseKind::Binary);
        if noisy && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.censor_rate) {
            return bad(format!("censor rate must lie in [0, 1], got {}", self.censor_rate));
        }
        if !(self.baseline_rate > 0.0 && self.baseline_rate.is_finite()) {
            return bad(format!("baseline rate must be positive, got {}", self.baseline_rate));
        }
        if let Some(c) = self.copula {
            let nuisance = self.p - self.kernel.n_true();
            if c.columns > nuisance {
                return bad(format!("copula wants {} nuisance columns, only {nuisance} exist", c.columns));
            }
            if !(0.0..1.0).contains(&c.correlation) {
                return bad(format!("copula correlation must lie in [0, 1), got {}", c.correlation));
            }
        }
        Ok(())
    }
}

/// Raw output of [`simulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    /// Predictors on their generated scale, `n × p`.
    pub x: DMatrix<f64>,
    pub response: Response,
    /// Noise-free signal per row.
    pub signal: Vec<f64>,
    pub truth: Vec<usize>,
    /// Columns tied together by the copula, if any.
    pub correlated: Vec<usize>,
    pub names: Vec<String>,
}

impl Simulated {
    pub fn into_model_data(self) -> Result<(ModelData, Vec<usize>)> {
        let data = ModelData::from_raw(&self.x, self.response, self.names, ScalingMethod::UnitCube)?;
        Ok((data, self.truth))
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Draw a dataset. The same spec always yields the same values.
pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut x = DMatrix::from_fn(n, p, |_, _| 0.0);
    for i in 0..n {
        for k in 0..p {
            x[(i, k)] = rng.random::<f64>();
        }
    }

    let mut correlated = Vec::new();
    if let Some(c) = spec.copula {
        let n_true = spec.kernel.n_true();
        let mut cols: Vec<usize> = sample(&mut rng, p - n_true, c.columns)
            .into_iter()
            .map(|j| j + n_true)
            .collect();
        cols.sort_unstable();
        let (a, b) = (c.correlation.sqrt(), (1.0 - c.correlation).sqrt());
        for i in 0..n {
            let common: f64 = rng.sample(StandardNormal);
            for &k in &cols {
                let own: f64 = rng.sample(StandardNormal);
                x[(i, k)] = std_normal_cdf(a * common + b * own).clamp(0.0, 1.0);
            }
        }
        correlated = cols;
    }

    let signal: Vec<f64> = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            spec.kernel.eval(spec.kind, &row)
        })
        .collect();

    let response = match spec.kind {
        ResponseKind::Continuous => {
            let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Response::Continuous(signal.iter().map(|s| s + noise.sample(&mut rng)).collect())
        }
        ResponseKind::Binary => {
            let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let centre = signal.iter().sum::<f64>() / n as f64;
            Response::Binary(signal.iter().map(|s| s - centre + noise.sample(&mut rng) > 0.0).collect())
        }
        ResponseKind::Count => {
            let counts = signal
                .iter()
                .map(|s| {
                    let lambda = s.exp();
                    Poisson::new(lambda)
                        .map(|d| d.sample(&mut rng) as u64)
                        .map_err(|e| Error::InvalidParameter(format!("Poisson mean {lambda}: {e}")))
                })
                .collect::<Result<Vec<u64>>>()?;
            Response::Count(counts)
        }
        ResponseKind::Survival => {
            let (time, event) = cox_times(&signal, spec.baseline_rate, spec.censor_rate, &mut rng);
            Response::Survival { time, event }
        }
    };

    Ok(Simulated {
        x,
        response,
        signal,
        truth: spec.kernel.truth(),
        correlated,
        names: (1..=p).map(|k| format!("x{k}")).collect(),
    })
}

/// Event times from an exponential baseline hazard with log relative risk
/// `signal`; each observation is censored with probability `censor_rate` at
/// a time drawn uniformly below its event time.
pub fn cox_times<R: Rng + ?Sized>(
    signal: &[f64],
    baseline_rate: f64,
    censor_rate: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<bool>) {
    let mut time = Vec::with_capacity(signal.len());
    let mut event = Vec::with_capacity(signal.len());
    for &s in signal {
        let m: f64 = Exp1.sample(rng);
        let t = m / (baseline_rate * s.exp());
        if rng.random::<f64>() < censor_rate {
            // Uniform on (0, t), excluding 0.
            let u = 1.0 - rng.random::<f64>();
            time.push(u * t);
            event.push(false);
        } else {
            time.push(t);
            event.push(true);
        }
    }
    (time, event)
}

/// Normalized dataset and the true predictor indices.
pub fn generate(spec: &SimSpec) -> Result<(ModelData, Vec<usize>)> {
    simulate(spec)?.into_model_data()
}

/// Draw `n_train + n_test` rows and split them in order; the test rows are
/// scaled with the training constants.
pub fn generate_split(
    spec: &SimSpec,
    n_train: usize,
    n_test: usize,
) -> Result<(ModelData, ModelData, Vec<usize>)> {
    let spec = SimSpec {
        n: n_train + n_test,
        ..spec.clone()
    };
    let (all, truth) = generate(&spec)?;
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    let (tr, te) = all.split(&train, &test)?;
    Ok((tr, te, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small4_at_origin_and_sine_peak() {
        let mut x = vec![0.0; 20];
        assert_eq!(SimKernel::Small4.eval(ResponseKind::Continuous, &x), 0.0);
        x[2] = std::f64::consts::PI / 6.0;
        let v = SimKernel::Small4.eval(ResponseKind::Continuous, &x);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_too_few_columns() {
        let s = SimSpec::new(SimKernel::MixedNonlinear, ResponseKind::Continuous, 10, 5, 1);
        assert!(simulate(&s).is_err());
    }

    #[test]
    fn copula_keeps_unit_range() {
        let mut s = SimSpec::new(SimKernel::Small4, ResponseKind::Continuous, 50, 30, 3);
        s.copula = Some(Copula::default());
        let out = simulate(&s).unwrap();
        assert_eq!(out.correlated.len(), 20);
        assert!(out.correlated.iter().all(|&k| k >= 4));
        assert!(out.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
