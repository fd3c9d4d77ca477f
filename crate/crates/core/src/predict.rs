//! Posterior prediction: predictive means, class labels, survivor curves
//! and error metrics.
//!
//! For a retained draw `Θ` the prediction at test inputs `X_f` is
//! `D(Θ) = C_(X_f, X) C_(X, X)^{-1} ẑ`, with covariances restricted to the
//! selected predictors. For the regression model `ẑ` is the smoother
//! `C (C + I/r)^{-1} y` of that draw, which gives
//! `D(Θ) = C_(X_f, X) (C + I/r)^{-1} y`; the latent models use the
//! posterior mean of the sampled latent values. Predictions average
//! `D(Θ)` over every `subsample`-th retained draw.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ModelData, Response, ResponseKind};
use crate::distcache::DistanceCache;
use crate::kernel::{covariance, factorize};
use crate::likelihood::NuisanceBlock;
use crate::sampler::{marginal_inclusion, BinaryLink, PosteriorTrace};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictOptions {
    /// Inclusion probability at or above which a predictor is kept.
    pub threshold: f64,
    /// Use every `subsample`-th retained draw.
    pub subsample: usize,
    /// Diagonal term of the latent covariance (count, survival, binary).
    pub latent_jitter: f64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            threshold: 0.5,
            subsample: 10,
            latent_jitter: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    /// Predictive mean on the latent scale (the response scale for
    /// regression).
    pub y_hat: Vec<f64>,
    /// Thresholded inclusion.
    pub selected: Vec<bool>,
    pub draws_used: usize,
    pub warnings: Vec<String>,
}

/// Per-draw predictions `D(Θ)` for the retained draws at positions
/// `subsample - 1, 2·subsample - 1, …`.
fn draw_predictions(
    trace: &PosteriorTrace,
    train: &ModelData,
    x_test: &DMatrix<f64>,
    opts: &PredictOptions,
) -> Result<(Vec<DVector<f64>>, Vec<bool>, Vec<String>)> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if x_test.ncols() != train.p() || trace.p() != train.p() {
        return Err(Error::Dimension(format!(
            "test data has {} predictors, training data {}, trace {}",
            x_test.ncols(),
            train.p(),
            trace.p()
        )));
    }
    if opts.subsample == 0 {
        return Err(Error::InvalidParameter("subsample must be positive".into()));
    }
    let mut warnings = Vec::new();
    let selected: Vec<bool> = marginal_inclusion(trace)?
        .iter()
        .map(|&q| q >= opts.threshold)
        .collect();
    if !selected.iter().any(|&s| s) {
        let w = "no predictor reaches the inclusion threshold; predicting from the intercept-only model".to_owned();
        log::warn!("{w}");
        warnings.push(w);
    }
    let target = match (&train.response, &trace.latent_mean) {
        (Response::Continuous(y), _) => DVector::from_column_slice(y),
        (_, Some(z)) if z.len() == train.n() => DVector::from_column_slice(z),
        (_, Some(_)) => return Err(Error::Dimension("latent mean does not match the training data".into())),
        (_, None) => {
            return Err(Error::InvalidParameter(
                "latent-model prediction needs the posterior mean of z".into(),
            ))
        }
    };
    let regression = train.response.kind() == ResponseKind::Continuous;
    let self_cache = DistanceCache::build_self(&train.x)?;
    let cross = DistanceCache::build(x_test, &train.x)?;
    let mut out = Vec::new();
    for rec in trace.records.iter().skip(opts.subsample - 1).step_by(opts.subsample) {
        let params = rec.params.restricted_to(&selected);
        let mut c = covariance(&self_cache, &params)?;
        let extra = if regression { 1.0 / rec.h.r } else { opts.latent_jitter };
        for i in 0..c.nrows() {
            c[(i, i)] += extra;
        }
        let c_fx = covariance(&cross, &params)?;
        let f = factorize(&c)?;
        out.push(c_fx * f.solve(&target));
    }
    Ok((out, selected, warnings))
}

/// Average of `D(Θ)` over the used draws.
pub fn predictive_mean(
    trace: &PosteriorTrace,
    train: &ModelData,
    x_test: &DMatrix<f64>,
    opts: &PredictOptions,
) -> Result<PredictionResult> {
    let (draws, selected, warnings) = draw_predictions(trace, train, x_test, opts)?;
    let used = draws.len();
    if used == 0 {
        return Err(Error::EmptyTrace);
    }
    let mut mean = DVector::zeros(x_test.nrows());
    for d in &draws {
        mean += d;
    }
    mean /= used as f64;
    Ok(PredictionResult {
        y_hat: mean.as_slice().to_vec(),
        selected,
        draws_used: used,
        warnings,
    })
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Class labels. Logit: 1 iff the draw-averaged `F(D)` exceeds 1/2.
/// Probit: 1 iff the averaged latent prediction is positive. Ties go to 0.
pub fn classify(
    trace: &PosteriorTrace,
    train: &ModelData,
    x_test: &DMatrix<f64>,
    link: BinaryLink,
    opts: &PredictOptions,
) -> Result<Vec<bool>> {
    if train.response.kind() != ResponseKind::Binary {
        return Err(Error::WrongModel(format!(
            "classification needs binary data, found {}",
            train.response.kind().name()
        )));
    }
    let (draws, _, _) = draw_predictions(trace, train, x_test, opts)?;
    if draws.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let m = draws.len() as f64;
    Ok((0..x_test.nrows())
        .map(|i| match link {
            BinaryLink::Logit => draws.iter().map(|d| logistic(d[i])).sum::<f64>() / m > 0.5,
            BinaryLink::Probit => draws.iter().map(|d| d[i]).sum::<f64>() / m > 0.0,
        })
        .collect())
}

/// Breslow cumulative baseline hazard
/// `H_0(t) = Σ_{event times s ≤ t} d_s / Σ_{j: time_j ≥ s} exp(z_j)`.
pub fn breslow_cumulative_hazard(time: &[f64], event: &[bool], z: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = time.len();
    if event.len() != n || z.len() != n {
        return Err(Error::Dimension("time, event and latent sizes differ".into()));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::AllCensored);
    }
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut event_times: Vec<f64> = (0..n).filter(|&i| event[i]).map(|i| time[i]).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut steps = Vec::with_capacity(event_times.len());
    let mut h = 0.0;
    for &s in &event_times {
        let d = (0..n).filter(|&i| event[i] && time[i] == s).count() as f64;
        let risk: f64 = (0..n).filter(|&j| time[j] >= s).map(|j| (z[j] - zmax).exp()).sum();
        h += d / risk * (-zmax).exp();
        steps.push((s, h));
    }
    Ok(grid
        .iter()
        .map(|&t| {
            let idx = steps.partition_point(|&(s, _)| s <= t);
            if idx == 0 {
                0.0
            } else {
                steps[idx - 1].1
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalPrediction {
    pub grid: Vec<f64>,
    pub baseline: Vec<f64>,
    /// One curve per test row, each evaluated on the grid.
    pub curves: Vec<Vec<f64>>,
    pub z_test: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SurvivalPrediction {
    /// Pointwise average over the test rows.
    pub fn mean_curve(&self) -> Vec<f64> {
        let m = self.curves.len().max(1) as f64;
        (0..self.grid.len())
            .map(|g| self.curves.iter().map(|c| c[g]).sum::<f64>() / m)
            .collect()
    }
}

/// Survivor curves `S_i(t) = Ŝ_0(t)^{exp(ẑ_{f,i})}` with `Ŝ_0` the Breslow
/// baseline at the posterior-mean latent values. Grid points past the
/// last observed time reuse the value there.
pub fn survivor_curve(
    trace: &PosteriorTrace,
    train: &ModelData,
    x_test: &DMatrix<f64>,
    grid: &[f64],
    opts: &PredictOptions,
) -> Result<SurvivalPrediction> {
    let Response::Survival { time, event } = &train.response else {
        return Err(Error::WrongModel(format!(
            "survivor curves need survival data, found {}",
            train.response.kind().name()
        )));
    };
    let z = trace
        .latent_mean
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("survival prediction needs the posterior mean of z".into()))?;
    let mut warnings = Vec::new();
    let t_max = time.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if grid.iter().any(|&t| t > t_max) {
        let w = format!("time grid extends past the last observed time {t_max}; curves are held flat there");
        log::warn!("{w}");
        warnings.push(w);
    }
    if grid.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be non-negative".into()));
    }
    let clamped: Vec<f64> = grid.iter().map(|&t| t.min(t_max)).collect();
    let baseline_h = breslow_cumulative_hazard(time, event, z, &clamped)?;
    let pred = predictive_mean(trace, train, x_test, opts)?;
    warnings.extend(pred.warnings);
    let baseline: Vec<f64> = baseline_h.iter().map(|h| (-h).exp()).collect();
    let curves = pred
        .y_hat
        .iter()
        .map(|&zf| baseline_h.iter().map(|h| (-h * zf.exp()).exp()).collect())
        .collect();
    Ok(SurvivalPrediction {
        grid: grid.to_vec(),
        baseline,
        curves,
        z_test: pred.y_hat,
        warnings,
    })
}

/// Product-limit estimate on the grid.
pub fn kaplan_meier(time: &[f64], event: &[bool], grid: &[f64]) -> Result<Vec<f64>> {
    if time.len() != event.len() {
        return Err(Error::Dimension("time and event sizes differ".into()));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::AllCensored);
    }
    let mut event_times: Vec<f64> = time.iter().zip(event).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut steps = Vec::with_capacity(event_times.len());
    let mut s = 1.0;
    for &u in &event_times {
        let d = time.iter().zip(event).filter(|(&t, &e)| e && t == u).count() as f64;
        let at_risk = time.iter().filter(|&&t| t >= u).count() as f64;
        s *= 1.0 - d / at_risk;
        steps.push((u, s));
    }
    Ok(grid
        .iter()
        .map(|&t| {
            let idx = steps.partition_point(|&(u, _)| u <= t);
            if idx == 0 {
                1.0
            } else {
                steps[idx - 1].1
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Mean squared error over the test-set variance.
    pub normalized_mspe: f64,
    pub rmspe: f64,
    pub r2: f64,
}

pub fn metrics(y_true: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_hat.len() || y_true.is_empty() {
        return Err(Error::Dimension(format!(
            "{} observations but {} predictions",
            y_true.len(),
            y_hat.len()
        )));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let var = y_true.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("test responses are constant".into()));
    }
    let mse = y_true.iter().zip(y_hat).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / n;
    let normalized_mspe = mse / var;
    Ok(Metrics {
        normalized_mspe,
        rmspe: mse.sqrt(),
        r2: 1.0 - normalized_mspe,
    })
}

/// Predictions on the response scale: the latent mean for regression,
/// `exp` of it (the Poisson / negative-binomial mean) for counts.
pub fn response_scale(kind: ResponseKind, y_hat: &[f64]) -> Vec<f64> {
    match kind {
        ResponseKind::Count => y_hat.iter().map(|v| v.exp()).collect(),
        _ => y_hat.to_vec(),
    }
}

/// `D(Θ)` of a single regression draw, with every predictor of `params`
/// as given (no thresholding).
pub fn single_draw_prediction(
    train: &ModelData,
    x_test: &DMatrix<f64>,
    params: &crate::kernel::KernelParams,
    h: &NuisanceBlock,
) -> Result<Vec<f64>> {
    let Response::Continuous(y) = &train.response else {
        return Err(Error::WrongModel("direct prediction is defined for regression".into()));
    };
    let mut c = covariance(&DistanceCache::build_self(&train.x)?, params)?;
    for i in 0..c.nrows() {
        c[(i, i)] += 1.0 / h.r;
    }
    let c_fx = covariance(&DistanceCache::build(x_test, &train.x)?, params)?;
    let f = factorize(&c)?;
    Ok((c_fx * f.solve(&DVector::from_column_slice(y))).as_slice().to_vec())
}
