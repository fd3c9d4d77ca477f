//! Numeric oracles: each quantity is recomputed by an independent, more
//! direct route (brute force, dense algebra, closed forms, quadrature or
//! frozen high-precision values) and compared at a fixed tolerance.

mod common;

use common::{dense_mvn, exp1_params, max_abs, projection_inputs, uniform_matrix};
use gpvs::distcache::DistanceCache;
use gpvs::kernel::{
    build_cov, factorize, update_cov_partial, CovMatrix,
};
use gpvs::likelihood::{
    curvature_cox, curvature_logit, curvature_negbin, loglik_cox_partial, loglik_logit, loglik_negbin,
    loglik_regression_projected, sample_standard_normal_above, Curvature,
};
use gpvs::prior::{logprior_gamma_vector, logprior_positive, InclusionPrior};
use gpvs::special::{ln_bessel_k, matern_correlation};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

#[test]
fn distance_cache_inflates_to_brute_force() {
    assert_eq!(common::distcache_mismatches(), 0);
    let x = uniform_matrix(13, 4, 1);
    let cache = DistanceCache::build_self(&x).unwrap();
    assert!(cache.n_unique() < 13 * 13);
}

#[test]
fn exp_covariance_matches_direct_formula() {
    let x = uniform_matrix(12, 3, 3);
    let cache = DistanceCache::build_self(&x).unwrap();
    let rho = [0.3, 1.0, 0.8];
    let c = build_cov(&cache, &exp1_params(&rho, 2.0, 0.5)).unwrap().c;
    let direct = DMatrix::from_fn(12, 12, |i, j| {
        let prod: f64 = (0..3).map(|k| rho[k].powf((x[(i, k)] - x[(j, k)]).powi(2))).product();
        0.5 + 2.0 * prod
    });
    assert!(max_abs(&c, &direct) < 1e-14);
}

#[test]
fn partial_update_matches_rebuild() {
    let x = uniform_matrix(40, 6, 4);
    let cache = DistanceCache::build_self(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rho: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
    let lambda_a = 1.7;
    let cov: CovMatrix = build_cov(&cache, &exp1_params(&rho, lambda_a, 0.9)).unwrap();

    let k = 2;
    let single = update_cov_partial(&cov, &cache, k, 0.42, rho[k], lambda_a).unwrap();
    let mut moved = rho.clone();
    moved[k] = 0.42;
    let rebuilt = build_cov(&cache, &exp1_params(&moved, lambda_a, 0.9)).unwrap();
    assert!(max_abs(&single.c, &rebuilt.c) <= 1e-12);

    let drift = common::partial_update_drift();
    assert!(drift <= 1e-12, "{drift}");
}

#[test]
fn partial_update_from_zero_is_undefined() {
    let x = uniform_matrix(5, 2, 6);
    let cache = DistanceCache::build_self(&x).unwrap();
    let cov = build_cov(&cache, &exp1_params(&[0.5, 0.5], 1.0, 1.0)).unwrap();
    assert!(update_cov_partial(&cov, &cache, 0, 0.5, 0.0, 1.0).is_err());
}

#[test]
fn woodbury_inverse_matches_dense_inverse() {
    let err = common::woodbury_error();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn projected_likelihood_matches_dense_density() {
    let (n, m, r) = (50, 20, 25.0);
    let (c_mm, c_mn, lambda) = projection_inputs(n, m);
    let y = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin());
    let mut full = lambda;
    for i in 0..n {
        full[(i, i)] += 1.0 / r;
    }
    let got = loglik_regression_projected(&y, &c_mm, &c_mn, r).unwrap();
    let want = dense_mvn(&y, &full);
    assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn marginal_likelihood_matches_dense_density() {
    let err = common::marginal_loglik_error();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn matern_half_is_exponential_of_root() {
    let err = common::matern_half_error();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn matern_and_bessel_match_high_precision_values() {
    // 40-digit reference values, truncated.
    let matern = [
        (0.001, 0.998_980_123_110_909_0),
        (0.01, 0.989_848_876_674_929_6),
        (0.1, 0.903_090_357_176_393_9),
        (0.5, 0.601_980_039_350_102_9),
        (1.0, 0.364_268_671_787_031_2),
    ];
    for (d, want) in matern {
        let got = matern_correlation(d, 50.0).unwrap();
        assert!((got - want).abs() <= 1e-10, "d={d}: {got} vs {want}");
    }
    let ln_k = [
        (50.0, 0.001, 523.917_719_737_787_0),
        (50.0, 1.0, 178.524_854_024_081_0),
        (50.0, 20.0, 26.743_587_991_783_55),
        (2.5, 0.3, 4.319_514_594_361_34),
        (7.5, 40.0, -40.929_067_933_663_92),
    ];
    for (nu, x, want) in ln_k {
        let got = ln_bessel_k(nu, x);
        assert!(((got - want) / want).abs() <= 1e-12, "nu={nu} x={x}: {got} vs {want}");
    }
}

#[test]
fn factorization_recovers_the_matrix() {
    let x = uniform_matrix(25, 3, 9);
    let c = build_cov(&DistanceCache::build_self(&x).unwrap(), &exp1_params(&[0.3, 0.3, 0.3], 1.0, 1.0))
        .unwrap()
        .c;
    let f = factorize(&c).unwrap();
    let l = f.l();
    let mut target = c.clone();
    for i in 0..25 {
        target[(i, i)] += f.jitter();
    }
    assert!(max_abs(&(&l * l.transpose()), &target) < 1e-12);
}

/// Composite Simpson rule on [lo, hi] with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn beta_bernoulli_matches_integral_over_alpha() {
    let mean: f64 = 0.3;
    let (a, b) = (2.0 * mean, 2.0 * (1.0 - mean));
    let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let gamma = [true, false, false, true, false, true, false, false];
    let k = 3.0;
    let p = 8.0;
    // Substitute α = sin²(θ) to remove the endpoint singularities of the
    // Beta density with a, b < 1: dα = 2 sin θ cos θ dθ.
    let integrand = |t: f64| {
        let (s, c) = (t.sin(), t.cos());
        let alpha = s * s;
        let val = ((a - 1.0 + k) * alpha.ln() + (b - 1.0 + p - k) * (1.0 - alpha).ln() - ln_b).exp();
        val * 2.0 * s * c
    };
    let want = simpson(integrand, 1e-12, std::f64::consts::FRAC_PI_2 - 1e-12, 200_000).ln();
    let got = logprior_gamma_vector(&gamma, &InclusionPrior::BetaBernoulli { mean });
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn gamma_prior_normalizes_with_rate_mean() {
    for (shape, rate) in [(1.0, 1.0), (2.0, 0.1), (5.0, 3.0)] {
        let dens = |x: f64| logprior_positive(x, shape, rate).unwrap().exp();
        let hi = (shape + 40.0 * shape.sqrt()) / rate + 50.0 / rate;
        let mass = simpson(dens, 1e-300, hi, 400_000);
        let mean = simpson(|x| x * dens(x), 1e-300, hi, 400_000);
        assert!((mass - 1.0).abs() < 1e-7, "mass {mass}");
        assert!((mean - shape / rate).abs() < 1e-6 * (shape / rate), "mean {mean}");
    }
}

#[test]
fn negative_binomial_tends_to_poisson() {
    let s = [0u64, 1, 3, 7, 20];
    let z = [-0.5, 0.1, 1.2, 2.0, 3.0];
    let poisson: f64 = s
        .iter()
        .zip(&z)
        .map(|(&si, &zi)| si as f64 * zi - zi.exp() - ln_gamma(si as f64 + 1.0))
        .sum();
    let nb = loglik_negbin(&s, &z, 1e9).unwrap();
    assert!((nb - poisson).abs() < 1e-6, "{nb} vs {poisson}");
}

#[test]
fn negative_binomial_mean_and_variance_identity() {
    use rand_distr::{Distribution, Gamma, Poisson};
    let (lambda, tau) = (4.0, 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100_000;
    let g = Gamma::new(tau, 1.0 / tau).unwrap();
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = g.sample(&mut rng);
            Poisson::new(lambda * u).unwrap().sample(&mut rng)
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let want_var = lambda + lambda * lambda / tau;
    let se_mean = (want_var / n as f64).sqrt();
    // The sample variance of a NB has its own standard error; estimate it
    // from the fourth central moment.
    let m4 = draws.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / n as f64;
    let se_var = ((m4 - var * var) / n as f64).sqrt();
    assert!((mean - lambda).abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var - want_var).abs() < 3.0 * se_var, "var {var} vs {want_var}");

    // The density sums to one and has the stated moments.
    let pmf = |s: u64| loglik_negbin(&[s], &[lambda.ln()], tau).unwrap().exp();
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for s in 0..2000u64 {
        let q = pmf(s);
        m0 += q;
        m1 += q * s as f64;
        m2 += q * (s as f64).powi(2);
    }
    assert!((m0 - 1.0).abs() < 1e-12);
    assert!((m1 - lambda).abs() < 1e-10);
    assert!((m2 - m1 * m1 - want_var).abs() < 1e-9);
}

#[test]
fn cox_partial_likelihood_matches_brute_force_with_ties() {
    let time = [2.0, 5.0, 5.0, 1.0, 7.0, 3.0, 5.0];
    let event = [true, true, false, true, false, true, true];
    let z = [0.3, -1.2, 0.5, 2.0, 0.0, -0.4, 1.1];
    let mut want = 0.0;
    let mut distinct: Vec<f64> = time.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    for &t in &distinct {
        let d: Vec<usize> = (0..7).filter(|&i| event[i] && time[i] == t).collect();
        if d.is_empty() {
            continue;
        }
        let risk: f64 = (0..7).filter(|&j| time[j] >= t).map(|j| f64::exp(z[j])).sum();
        want += d.iter().map(|&i| z[i]).sum::<f64>() - d.len() as f64 * risk.ln();
    }
    let got = loglik_cox_partial(&time, &event, &z).unwrap();
    assert!((got - want).abs() < 1e-13);
    // invariant to a common shift
    let shifted: Vec<f64> = z.iter().map(|v| v + 3.7).collect();
    assert!((loglik_cox_partial(&time, &event, &shifted).unwrap() - got).abs() < 1e-12);
}

fn check_curvature(f: impl Fn(&[f64]) -> f64, c: &Curvature, z: &[f64]) {
    let n = z.len();
    let h = 1e-5;
    for i in 0..n {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[i] += h;
        zm[i] -= h;
        let g = (f(&zp) - f(&zm)) / (2.0 * h);
        assert!((g - c.grad[i]).abs() < 1e-6 * g.abs().max(1.0), "grad {i}: {g} vs {}", c.grad[i]);
        for j in 0..n {
            let mut zpp = zp.clone();
            let mut zpm = zp.clone();
            let mut zmp = zm.clone();
            let mut zmm = zm.clone();
            zpp[j] += h;
            zpm[j] -= h;
            zmp[j] += h;
            zmm[j] -= h;
            let hess = (f(&zpp) - f(&zpm) - f(&zmp) + f(&zmm)) / (4.0 * h * h);
            let got = -c.neg_hess[(i, j)];
            assert!((hess - got).abs() < 1e-4 * hess.abs().max(1.0), "hess {i},{j}: {hess} vs {got}");
        }
    }
}

#[test]
fn latent_curvatures_match_finite_differences() {
    let z = [0.4, -0.7, 1.3, 0.0, 2.1, -1.5];
    let s = [1u64, 0, 5, 2, 9, 0];
    let tau = 3.0;
    check_curvature(|v| loglik_negbin(&s, v, tau).unwrap(), &curvature_negbin(&s, &z, tau).unwrap(), &z);
    let t = [true, false, true, true, false, false];
    check_curvature(|v| loglik_logit(&t, v).unwrap(), &curvature_logit(&t, &z).unwrap(), &z);
    let time = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
    let event = [true, true, false, true, true, false];
    check_curvature(
        |v| loglik_cox_partial(&time, &event, v).unwrap(),
        &curvature_cox(&time, &event, &z).unwrap(),
        &z,
    );
}

#[test]
fn truncated_normal_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    for a in [0.0f64, -1.0, 2.5] {
        let draws: Vec<f64> = (0..n).map(|_| sample_standard_normal_above(a, &mut rng)).collect();
        let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tail = 0.5 * statrs::function::erf::erfc(a / std::f64::consts::SQRT_2);
        let mean_want = phi / tail;
        let var_want = 1.0 + a * mean_want - mean_want * mean_want;
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(draws.iter().all(|&x| x > a));
        assert!(
            (mean - mean_want).abs() < 3.0 * (var_want / n as f64).sqrt(),
            "a={a}: {mean} vs {mean_want}"
        );
    }
}
