//! Log-likelihoods for the regression, binary, count and survival models.
//!
//! The regression model integrates the latent process out analytically;
//! the other models keep the latent vector `z` explicit and evaluate the
//! augmented likelihood of the data given `z`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::kernel::{factorize, woodbury_half, CovMatrix, Factor};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters outside the covariance: regression error precision `r` and
/// negative-binomial over-dispersion `τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuisanceBlock {
    pub r: f64,
    pub tau: f64,
}

impl NuisanceBlock {
    pub fn validate(&self) -> Result<()> {
        if self.r > 0.0 && self.tau > 0.0 && self.r.is_finite() && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "nuisance parameters must be positive (r = {}, tau = {})",
                self.r, self.tau
            )))
        }
    }
}

/// Explicit latent values: the GP variate `z` and, for the probit model,
/// the augmented Gaussian responses.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z: DVector<f64>,
    pub aug_y: Option<DVector<f64>>,
}

/// `log N(v; 0, Σ)` given a factor of `Σ`.
pub fn mvn_log_density(v: &DVector<f64>, factor: &Factor) -> f64 {
    -0.5 * (v.len() as f64 * LN_2PI + factor.log_det() + factor.quad_form(v))
}

/// `log N(y; 0, (1/r) I + C)`.
pub fn loglik_regression_marginal(y: &DVector<f64>, c: &CovMatrix, r: f64) -> Result<f64> {
    loglik_gaussian_noise(y, &c.c, r)
}

pub(crate) fn loglik_gaussian_noise(y: &DVector<f64>, c: &DMatrix<f64>, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter("error precision r must be positive".into()));
    }
    if y.len() != c.nrows() {
        return Err(Error::Dimension("response and covariance sizes differ".into()));
    }
    let mut sigma = c.clone();
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += 1.0 / r;
    }
    Ok(mvn_log_density(y, &factorize(&sigma)?))
}

/// `log N(y; 0, Λ_n)` with the knot-projected covariance
/// `Λ_n = (1/r) I + C_mn' C_mm^{-1} C_mn`, using the Woodbury identity for
/// the quadratic form and the determinant lemma for `log det Λ_n`.
pub fn loglik_regression_projected(
    y: &DVector<f64>,
    c_mm: &DMatrix<f64>,
    c_mn: &DMatrix<f64>,
    r: f64,
) -> Result<f64> {
    let n = y.len();
    if c_mn.ncols() != n {
        return Err(Error::Dimension("response and projection sizes differ".into()));
    }
    let (w, inner) = woodbury_half(c_mm, c_mn, r)?;
    let f_mm = factorize(c_mm)?;
    let wy = &w * y;
    let quad = r * y.norm_squared() - r * r * wy.norm_squared();
    let log_det = -(n as f64) * r.ln() + inner.log_det() - f_mm.log_det();
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + quad))
}

/// Negative-binomial log-likelihood with mean `λ_i = exp(z_i)` and
/// over-dispersion `τ` (variance `λ + λ²/τ`).
pub fn loglik_negbin(s: &[u64], z: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    if s.len() != z.len() {
        return Err(Error::Dimension("counts and latent sizes differ".into()));
    }
    let lg_tau = ln_gamma(tau);
    let mut total = 0.0;
    for (&si, &zi) in s.iter().zip(z) {
        let lambda = zi.exp();
        if !lambda.is_finite() {
            return Err(Error::NonFinite(format!("negative-binomial mean exp({zi})")));
        }
        let sf = si as f64;
        // log(τ + λ) computed stably for large z
        let log_tau_lambda = if zi > tau.ln() {
            zi + (tau * (-zi).exp()).ln_1p()
        } else {
            tau.ln() + (lambda / tau).ln_1p()
        };
        total += ln_gamma(sf + tau) - ln_gamma(sf + 1.0) - lg_tau
            + tau * (tau.ln() - log_tau_lambda)
            + sf * (zi - log_tau_lambda);
    }
    Ok(total)
}

/// Cox partial log-likelihood with Breslow handling of tied event times:
/// `Σ_t [Σ_{i ∈ D_t} z_i - |D_t| log Σ_{j: time_j ≥ t} exp(z_j)]`.
pub fn loglik_cox_partial(time: &[f64], event: &[bool], z: &[f64]) -> Result<f64> {
    let n = time.len();
    if event.len() != n || z.len() != n {
        return Err(Error::Dimension("time, event and latent sizes differ".into()));
    }
    if !event.iter().any(|&e| e) {
        return Err(Error::AllCensored);
    }
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    let mut risk = 0.0;
    let mut total = 0.0;
    let mut i = 0;
    while i < n {
        let t = time[order[i]];
        let mut j = i;
        let mut d_count = 0usize;
        let mut d_sum = 0.0;
        while j < n && time[order[j]] == t {
            let idx = order[j];
            risk += (z[idx] - zmax).exp();
            if event[idx] {
                d_count += 1;
                d_sum += z[idx];
            }
            j += 1;
        }
        if d_count > 0 {
            total += d_sum - d_count as f64 * (risk.ln() + zmax);
        }
        i = j;
    }
    Ok(total)
}

/// `log(1 + exp(x))` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli-logit log-likelihood `Σ [t_i z_i - log(1 + exp(z_i))]`.
pub fn loglik_logit(t: &[bool], z: &[f64]) -> Result<f64> {
    if t.len() != z.len() {
        return Err(Error::Dimension("labels and latent sizes differ".into()));
    }
    Ok(t.iter()
        .zip(z)
        .map(|(&ti, &zi)| if ti { zi } else { 0.0 } - log1p_exp(zi))
        .sum())
}

/// Gradient and negated Hessian of a latent log-likelihood with respect to
/// the latent values.
#[derive(Clone, Debug, PartialEq)]
pub struct Curvature {
    pub grad: DVector<f64>,
    pub neg_hess: DMatrix<f64>,
}

fn diagonal_curvature(pairs: impl Iterator<Item = (f64, f64)>, n: usize) -> Curvature {
    let mut grad = DVector::zeros(n);
    let mut neg_hess = DMatrix::zeros(n, n);
    for (i, (g, w)) in pairs.enumerate() {
        grad[i] = g;
        neg_hess[(i, i)] = w;
    }
    Curvature { grad, neg_hess }
}

pub fn curvature_negbin(s: &[u64], z: &[f64], tau: f64) -> Result<Curvature> {
    if s.len() != z.len() {
        return Err(Error::Dimension("counts and latent sizes differ".into()));
    }
    let pairs = s.iter().zip(z).map(|(&si, &zi)| {
        let sf = si as f64;
        // q = λ / (τ + λ), computed without overflow
        let q = 1.0 / (1.0 + tau * (-zi).exp());
        (sf - (sf + tau) * q, (sf + tau) * q * (1.0 - q))
    });
    Ok(diagonal_curvature(pairs, z.len()))
}

pub fn curvature_logit(t: &[bool], z: &[f64]) -> Result<Curvature> {
    if t.len() != z.len() {
        return Err(Error::Dimension("labels and latent sizes differ".into()));
    }
    let pairs = t.iter().zip(z).map(|(&ti, &zi)| {
        let p = 1.0 / (1.0 + (-zi).exp());
        (f64::from(u8::from(ti)) - p, p * (1.0 - p))
    });
    Ok(diagonal_curvature(pairs, z.len()))
}

/// Derivatives of [`loglik_cox_partial`].
pub fn curvature_cox(time: &[f64], event: &[bool], z: &[f64]) -> Result<Curvature> {
    let n = time.len();
    if event.len() != n || z.len() != n {
        return Err(Error::Dimension("time, event and latent sizes differ".into()));
    }
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = z.iter().map(|&v| (v - zmax).exp()).collect();
    let mut grad = DVector::from_fn(n, |i, _| f64::from(u8::from(event[i])));
    let mut diag = DVector::<f64>::zeros(n);
    // Rows sqrt(d_t) π_t over distinct event times; the outer-product sum
    // is then one matrix product.
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    let mut total = 0.0;
    let mut i = 0;
    while i < n {
        let t = time[order[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < n && time[order[j]] == t {
            total += w[order[j]];
            d += usize::from(event[order[j]]);
            j += 1;
        }
        if d > 0 {
            let df = d as f64;
            let mut row = DVector::<f64>::zeros(n);
            for &a in &order[..j] {
                let pa = w[a] / total;
                grad[a] -= df * pa;
                diag[a] += df * pa;
                row[a] = df.sqrt() * pa;
            }
            rows.push(row);
        }
        i = j;
    }
    let pi = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let mut neg_hess = -(pi.transpose() * &pi);
    for a in 0..n {
        neg_hess[(a, a)] += diag[a];
    }
    Ok(Curvature { grad, neg_hess })
}

/// Draw `X ~ N(0, 1)` conditioned on `X > a`.
pub fn sample_standard_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if x > a {
                return x;
            }
        }
    }
    // Exponential proposal with the optimal rate (Robert, 1995).
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = a + e / alpha;
        let u: f64 = rng.random();
        if u <= (-0.5 * (x - alpha).powi(2)).exp() {
            return x;
        }
    }
}

/// Probit augmentation: `aug_y_i ~ N(z_i, 1)` truncated to `(0, ∞)` when
/// `t_i = 1` and to `(-∞, 0)` when `t_i = 0`.
pub fn gibbs_update_probit_latents<R: Rng + ?Sized>(
    t: &[bool],
    z: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    t.iter()
        .zip(z)
        .map(|(&ti, &zi)| {
            if ti {
                zi + sample_standard_normal_above(-zi, rng)
            } else {
                zi - sample_standard_normal_above(zi, rng)
            }
        })
        .collect()
}

/// Scalar `log N(y; 0, v)`; handy for tests and one-dimensional checks.
pub fn normal_log_density(y: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + y * y / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_regression() {
        let (c, r, y) = (0.8, 2.0, 0.6);
        let cov = CovMatrix {
            c: DMatrix::from_element(1, 1, c),
            lambda_a: 1.0,
        };
        let got = loglik_regression_marginal(&DVector::from_element(1, y), &cov, r).unwrap();
        let v = 1.0 / r + c;
        let want = -0.5 * (2.0 * PI * v).ln() - y * y / (2.0 * v);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn zero_response_is_log_det_term() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let cov = CovMatrix { c: c.clone(), lambda_a: 1.0 };
        let got = loglik_regression_marginal(&DVector::zeros(2), &cov, 1.0).unwrap();
        let sigma = c + DMatrix::identity(2, 2);
        let want = -0.5 * (sigma * 2.0 * PI).determinant().ln();
        assert!((got - want).abs() < 1e-13);
    }

    #[test]
    fn negbin_special_cases() {
        let z = [0.3, -1.0, 2.0];
        let tau = 1.7;
        let got = loglik_negbin(&[0, 0, 0], &z, tau).unwrap();
        let want: f64 = z.iter().map(|zi| tau * (tau / (tau + zi.exp())).ln()).sum();
        assert!((got - want).abs() < 1e-12);

        let s = [3u64, 0, 5];
        let got = loglik_negbin(&s, &z, 1.0).unwrap();
        let want: f64 = s
            .iter()
            .zip(&z)
            .map(|(&si, zi)| {
                let l = zi.exp();
                si as f64 * l.ln() - (si as f64 + 1.0) * (1.0 + l).ln()
            })
            .sum();
        assert!((got - want).abs() < 1e-12);
        assert!(loglik_negbin(&s, &z, 0.0).is_err());
    }

    #[test]
    fn cox_uniform_hazard() {
        let time = [1.0, 2.0, 3.0, 4.0, 5.0];
        let event = [true; 5];
        let got = loglik_cox_partial(&time, &event, &[0.0; 5]).unwrap();
        let want: f64 = -(1..=5).map(|k| (k as f64).ln()).sum::<f64>();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn cox_single_event_and_all_censored() {
        let time = [2.0, 1.0, 3.0, 0.5];
        let event = [false, true, false, false];
        let z = [0.4, -0.2, 1.1, 3.0];
        let got = loglik_cox_partial(&time, &event, &z).unwrap();
        // risk set at t = 1: observations with time >= 1
        let lse = (0.4f64.exp() + (-0.2f64).exp() + 1.1f64.exp()).ln();
        assert!((got - (-0.2 - lse)).abs() < 1e-12);
        assert!(matches!(
            loglik_cox_partial(&time, &[false; 4], &z),
            Err(Error::AllCensored)
        ));
    }

    #[test]
    fn logit_cases() {
        let got = loglik_logit(&[true, false, true], &[0.0; 3]).unwrap();
        assert!((got - 3.0 * 0.5f64.ln()).abs() < 1e-14);
        let sat = loglik_logit(&[true], &[800.0]).unwrap();
        assert!(sat.abs() < 1e-300 || sat == 0.0);
        assert!(loglik_logit(&[false], &[800.0]).unwrap().is_finite());
    }

    #[test]
    fn probit_truncation_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = [true, false, true, false];
        let z = [-3.0, 2.5, 0.0, -10.0];
        for _ in 0..2000 {
            let y = gibbs_update_probit_latents(&t, &z, &mut rng);
            assert!(y[0] > 0.0 && y[1] < 0.0 && y[2] > 0.0 && y[3] < 0.0);
        }
    }
}
