//! Checks shared by the focused test files and the acceptance target.
#![allow(dead_code)]

use gpvs::dataset::{ModelData, Response, ResponseKind, ScalingMethod};
use gpvs::distcache::DistanceCache;
use gpvs::kernel::{build_cov, update_cov_partial, woodbury_inverse, KernelFamily, KernelParams};
use gpvs::likelihood::loglik_regression_marginal;
use gpvs::prior::{InclusionPrior, PriorConfig, Slab};
use gpvs::sampler::{ModelSpec, PosteriorTrace, Sampler, SamplerConfig, Scheme, UpdateBlocks};
use gpvs::special::matern_correlation;
use gpvs::simgen::{generate, SimKernel, SimSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF};

pub fn uniform_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.random::<f64>())
}

pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Dense `log N(y; 0, S)` through an LU determinant and explicit inverse,
/// independent of the library's Cholesky path.
pub fn dense_mvn(y: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let det = s.clone().lu().determinant();
    let inv = s.clone().try_inverse().unwrap();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + det.ln() + (y.transpose() * inv * y)[(0, 0)])
}

/// One-term exponential kernel; `ρ = 1` entries are excluded.
pub fn exp1_params(rho: &[f64], lambda_a: f64, lambda_z: f64) -> KernelParams {
    let mut params = KernelParams::new(KernelFamily::Exp1, rho.len());
    for (k, &r) in rho.iter().enumerate() {
        if r < 1.0 {
            params.set(0, k, Some(r));
        }
    }
    params.lambda_a = lambda_a;
    params.terms[0].lambda_z = lambda_z;
    params
}

/// Mean and batch-means standard error of a correlated series.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let batches = 50;
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (xs.iter().sum::<f64>() / xs.len() as f64, (var / batches as f64).sqrt())
}

fn within_3se(name: &str, xs: &[f64], want: f64) -> Result<(), String> {
    let (mean, se) = mean_and_se(xs);
    if (mean - want).abs() <= 3.0 * se {
        Ok(())
    } else {
        Err(format!("{name}: mean {mean:.5}, expected {want:.5}, se {se:.5}"))
    }
}

// ---- numeric oracles -------------------------------------------------

/// Number of entries where cache inflation differs from the brute-force
/// squared differences (duplicated rows included).
pub fn distcache_mismatches() -> usize {
    let x1 = uniform_matrix(13, 4, 1);
    let mut x2 = uniform_matrix(9, 4, 2);
    for k in 0..4 {
        x2[(3, k)] = x1[(5, k)];
        x2[(7, k)] = x2[(2, k)];
    }
    let mut bad = 0;
    for (a, b) in [(&x1, &x1), (&x1, &x2)] {
        let flat = DistanceCache::build(a, b).unwrap().inflate();
        let mut idx = 0;
        for i in 0..a.nrows() {
            for j in 0..b.nrows() {
                for k in 0..4 {
                    let d = a[(i, k)] - b[(j, k)];
                    bad += usize::from(flat[idx] != d * d);
                    idx += 1;
                }
            }
        }
    }
    bad
}

/// Largest entry difference between 100 chained partial updates and a
/// rebuild from the final parameters.
pub fn partial_update_drift() -> f64 {
    let x = uniform_matrix(40, 6, 4);
    let cache = DistanceCache::build_self(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rho: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
    let lambda_a = 1.7;
    let mut cov = build_cov(&cache, &exp1_params(&rho, lambda_a, 0.9)).unwrap();
    for _ in 0..100 {
        let k = rng.random_range(0..6);
        let new = rng.random_range(0.05..0.95);
        cov = update_cov_partial(&cov, &cache, k, new, rho[k], lambda_a).unwrap();
        rho[k] = new;
    }
    let rebuilt = build_cov(&cache, &exp1_params(&rho, lambda_a, 0.9)).unwrap();
    max_abs(&cov.c, &rebuilt.c)
}

/// Knot covariances and the dense projected covariance `Λ_n` without the
/// noise term.
pub fn projection_inputs(n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let x = uniform_matrix(n, 3, 7);
    let knots = x.rows(0, m).into_owned();
    // rough correlations keep C_mm well conditioned for the dense oracle
    let params = exp1_params(&[0.001, 0.01, 0.05], 1.0, 1.0);
    let c_mm = gpvs::kernel::covariance(&DistanceCache::build_self(&knots).unwrap(), &params).unwrap();
    let c_mn = gpvs::kernel::covariance(&DistanceCache::build(&knots, &x).unwrap(), &params).unwrap();
    let lambda = c_mn.transpose() * c_mm.clone().try_inverse().unwrap() * &c_mn;
    (c_mm, c_mn, lambda)
}

/// Max-entry gap between the Woodbury inverse and a dense inverse at
/// n = 50, m = 20.
pub fn woodbury_error() -> f64 {
    let (n, m, r) = (50, 20, 25.0);
    let (c_mm, c_mn, lambda) = projection_inputs(n, m);
    let mut full = lambda;
    for i in 0..n {
        full[(i, i)] += 1.0 / r;
    }
    let dense = full.try_inverse().unwrap();
    max_abs(&woodbury_inverse(&c_mm, &c_mn, r).unwrap(), &dense)
}

/// Largest gap between the ν = 1/2 Matérn correlation and `exp(−√(2d))`.
pub fn matern_half_error() -> f64 {
    [1e-8, 1e-4, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0]
        .iter()
        .map(|&d| (matern_correlation(d, 0.5).unwrap() - (-(2.0 * d).sqrt()).exp()).abs())
        .fold(0.0, f64::max)
}

/// Absolute gap between the marginal regression likelihood and a dense
/// multivariate normal density.
pub fn marginal_loglik_error() -> f64 {
    let x = uniform_matrix(30, 4, 8);
    let cache = DistanceCache::build_self(&x).unwrap();
    let cov = build_cov(&cache, &exp1_params(&[0.1, 0.5, 1.0, 0.7], 3.0, 0.8)).unwrap();
    let y = DVector::from_fn(30, |i, _| x[(i, 0)] + (3.0 * x[(i, 1)]).sin());
    let r = 20.0;
    let mut s = cov.c.clone();
    for i in 0..30 {
        s[(i, i)] += 1.0 / r;
    }
    (loglik_regression_marginal(&y, &cov, r).unwrap() - dense_mvn(&y, &s)).abs()
}

// ---- sampler properties ----------------------------------------------

fn continuous_data(n: usize, p: usize, seed: u64) -> ModelData {
    generate(&SimSpec::new(SimKernel::Small4, ResponseKind::Continuous, n, p, seed))
        .unwrap()
        .0
}

/// With the likelihood off, inclusion frequencies, slab histogram bins and
/// precisions match the prior within 3 MC standard errors.
pub fn prior_recovery(scheme: Scheme) -> Result<(), String> {
    let p = 4;
    let data = continuous_data(8, p, 1);
    let alpha = 0.3;
    let (a, b) = (2.0, 3.0);
    let prior = PriorConfig {
        inclusion: InclusionPrior::FixedAlpha(alpha),
        slab: Slab::Beta { a, b },
        ..PriorConfig::default()
    };
    let iters = match scheme {
        Scheme::One => 200_000,
        _ => 60_000,
    };
    let config = SamplerConfig {
        scheme,
        iters,
        burnin: 2_000,
        use_likelihood: false,
        seed: 21,
        ..SamplerConfig::default()
    };
    let trace = Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), prior, config)
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())?;

    // Coordinates are exchangeable under the prior, so indicators are
    // averaged over k before the standard error is taken.
    let pooled = |f: &dyn Fn(bool, f64) -> f64| -> Vec<f64> {
        trace
            .records
            .iter()
            .map(|r| {
                let t = &r.params.terms[0];
                (0..p).map(|k| f(t.gamma[k], t.rho[k])).sum::<f64>() / p as f64
            })
            .collect()
    };
    let name = scheme.name();
    within_3se(&format!("{name} inclusion"), &pooled(&|g, _| g as u8 as f64), alpha)?;
    let slab = Beta::new(a, b).unwrap();
    let edges = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let want = alpha * (slab.cdf(hi) - slab.cdf(lo));
        let series = pooled(&|g, r| (g && r >= lo && r < hi) as u8 as f64);
        within_3se(&format!("{name} slab bin [{lo}, {hi})"), &series, want)?;
    }
    let lambda_a: Vec<f64> = trace.records.iter().map(|r| r.params.lambda_a).collect();
    let lambda_z: Vec<f64> = trace.records.iter().map(|r| r.params.terms[0].lambda_z).collect();
    let r: Vec<f64> = trace.records.iter().map(|r| r.h.r).collect();
    within_3se(&format!("{name} lambda_a"), &lambda_a, 1.0)?;
    within_3se(&format!("{name} lambda_z"), &lambda_z, 1.0)?;
    within_3se(&format!("{name} r"), &r, 20.0)
}

/// With every block but the latent one frozen and the likelihood off, the
/// latent draws at n = 5 follow `N(0, C + ηI)` entrywise within 3 MC SE.
pub fn latent_invariance(z_laplace: bool) -> Result<(), String> {
    let data = generate(&SimSpec::new(SimKernel::Small4, ResponseKind::Count, 5, 4, 3))
        .unwrap()
        .0;
    let spec = ModelSpec::new(KernelFamily::Exp1);
    let config = SamplerConfig {
        iters: 41_000,
        burnin: 1_000,
        use_likelihood: false,
        z_laplace,
        store_latent: true,
        blocks: UpdateBlocks {
            selection: false,
            precisions: false,
            nuisance: false,
            latent: true,
        },
        seed: 31,
        ..SamplerConfig::default()
    };
    let mut sampler =
        Sampler::new(&data, spec.clone(), PriorConfig::default(), config).map_err(|e| e.to_string())?;
    let mut params = KernelParams::new(KernelFamily::Exp1, 4);
    params.set(0, 0, Some(0.05));
    params.set(0, 2, Some(0.3));
    params.lambda_a = 2.0;
    params.terms[0].lambda_z = 0.5;
    let h = sampler.state().h;
    sampler.set_state(params.clone(), h).map_err(|e| e.to_string())?;
    let trace = sampler.run().map_err(|e| e.to_string())?;

    let mut k = build_cov(&DistanceCache::build_self(&data.x).unwrap(), &params).unwrap().c;
    for i in 0..5 {
        k[(i, i)] += spec.latent_jitter;
    }
    let zs: Vec<&Vec<f64>> = trace.records.iter().map(|r| r.z.as_ref().unwrap()).collect();
    for i in 0..5 {
        for j in i..5 {
            let series: Vec<f64> = zs.iter().map(|z| z[i] * z[j]).collect();
            within_3se(&format!("laplace={z_laplace} E[z{i} z{j}]"), &series, k[(i, j)])?;
        }
        let series: Vec<f64> = zs.iter().map(|z| z[i]).collect();
        within_3se(&format!("laplace={z_laplace} E[z{i}]"), &series, 0.0)?;
    }
    Ok(())
}

/// Sup-distance between the Scheme 2 empirical CDF of `ρ` (p = 1, 10⁵
/// retained draws, γ held in the model, precisions fixed) and a grid
/// quadrature of the exact posterior.
pub fn rho_quadrature_sup() -> Result<f64, String> {
    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x_raw = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
    let y: Vec<f64> = (0..n)
        .map(|i| (2.0 * x_raw[(i, 0)]).sin() + 0.2 * (rng.random::<f64>() - 0.5))
        .collect();
    let data = ModelData::from_raw(
        &x_raw,
        Response::Continuous(y.clone()),
        vec!["x1".into()],
        ScalingMethod::UnitCube,
    )
    .unwrap();
    // Inclusion prior so close to 1 that exclusion never happens in
    // practice; precisions and r stay at their prior means.
    let prior = PriorConfig {
        inclusion: InclusionPrior::FixedAlpha(1.0 - 1e-12),
        ..PriorConfig::default()
    };
    let (lambda_a, lambda_z, r) = (1.0, 1.0, 20.0);
    let config = SamplerConfig {
        iters: 101_000,
        burnin: 1_000,
        blocks: UpdateBlocks {
            selection: true,
            precisions: false,
            nuisance: false,
            latent: true,
        },
        seed: 42,
        ..SamplerConfig::default()
    };
    let trace = Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), prior, config)
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())?;
    let mut draws = trace.rho_series(0, 0);
    if draws.len() != 100_000 || draws.iter().any(|&v| v >= 1.0) {
        return Err("predictor dropped out or wrong draw count".into());
    }
    draws.sort_by(f64::total_cmp);

    let yv = DVector::from_vec(y);
    let x = &data.x;
    let log_post = |rho: f64| {
        let s = DMatrix::from_fn(n, n, |i, j| {
            let d = (x[(i, 0)] - x[(j, 0)]).powi(2);
            1.0 / lambda_a + rho.powf(d) / lambda_z + if i == j { 1.0 / r } else { 0.0 }
        });
        dense_mvn(&yv, &s)
    };
    // Midpoint grid; the uniform slab contributes a constant.
    let m = 4000;
    let lp: Vec<f64> = (0..m).map(|i| log_post((i as f64 + 0.5) / m as f64)).collect();
    let top = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut cdf = 0.0;
    let mut sup: f64 = 0.0;
    for (i, wi) in w.iter().enumerate() {
        cdf += wi / total;
        let edge = (i + 1) as f64 / m as f64;
        let emp = draws.partition_point(|&v| v <= edge) as f64 / draws.len() as f64;
        sup = sup.max((emp - cdf).abs());
    }
    Ok(sup)
}

// ---- determinism -----------------------------------------------------

pub fn short_run(scheme: Scheme, kind: ResponseKind, seed: u64, chain: u64) -> PosteriorTrace {
    let data = generate(&SimSpec::new(SimKernel::Small4, kind, 30, 6, 5)).unwrap().0;
    let config = SamplerConfig {
        scheme,
        iters: 150,
        burnin: 50,
        seed,
        chain,
        store_latent: true,
        ..SamplerConfig::default()
    };
    Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), PriorConfig::default(), config)
        .unwrap()
        .run()
        .unwrap()
}

/// Bit-exact text form of every record and move.
pub fn fingerprint(trace: &PosteriorTrace) -> String {
    let mut s = String::new();
    for r in &trace.records {
        s += &format!("{:?}|{:?}|{:?}\n", r.params, r.h, r.z);
    }
    for m in &trace.moves {
        s += &format!("{}{}{}", m.iteration, m.kind.name(), m.accepted);
    }
    s
}
