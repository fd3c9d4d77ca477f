use gpvs::dataset::ResponseKind;
use gpvs::distcache::DistanceCache;
use gpvs::kernel::{covariance, factorize, KernelFamily, KernelParams};
use gpvs::prior::PriorConfig;
use gpvs::sampler::{ModelSpec, Sampler, SamplerConfig, Scheme};
use gpvs::simgen::{generate, SimKernel, SimSpec};
use gpvs::special::matern_correlation;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Result<T> = std::result::Result<T, String>;

fn grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err("need at least two grid points".into());
    }
    Ok((0..points).map(|i| i as f64 / (points - 1) as f64).collect())
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(format!("rho must lie in (0, 1], got {rho}"))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn prior_draws(
    family: &str,
    rho: f64,
    nu: f64,
    lambda_a: f64,
    lambda_z: f64,
    points: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let family: KernelFamily = family.parse().map_err(|e: gpvs::Error| e.to_string())?;
    if family.n_terms() != 1 {
        return Err("the demo draws from single-term kernels".into());
    }
    check_rho(rho)?;
    let xs = grid(points)?;
    let x = DMatrix::from_column_slice(points, 1, &xs);
    let cache = DistanceCache::build_self(&x).map_err(|e| e.to_string())?;
    let mut params = KernelParams::new(family, 1);
    params.set(0, 0, Some(rho));
    params.lambda_a = lambda_a;
    params.terms[0].lambda_z = lambda_z;
    params.nu = nu;
    params.validate().map_err(|e| e.to_string())?;
    let c = covariance(&cache, &params).map_err(|e| e.to_string())?;
    let f = factorize(&c).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(points * draws);
    for _ in 0..draws {
        let u = DVector::from_fn(points, |_, _| StandardNormal.sample(&mut rng));
        out.extend(f.mul_lower(&u).iter());
    }
    Ok(out)
}

pub fn correlation_curves(rho: f64, nu: f64, points: usize) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let xs = grid(points)?;
    let scale = -rho.ln();
    let mut out: Vec<f64> = xs.iter().map(|&t| (-scale * t * t).exp()).collect();
    for &t in &xs {
        out.push(matern_correlation(scale * t * t, nu).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

pub fn selection_run(n: usize, p: usize, iters: usize, seed: u64) -> Result<Vec<f64>> {
    if iters < 2 {
        return Err("need at least two iterations".into());
    }
    let spec = SimSpec::new(SimKernel::Small4, ResponseKind::Continuous, n, p, seed);
    let (data, _) = generate(&spec).map_err(|e| e.to_string())?;
    let burnin = iters / 2;
    let config = SamplerConfig {
        scheme: Scheme::Two,
        iters,
        burnin,
        seed,
        ..SamplerConfig::default()
    };
    let mut sampler = Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), PriorConfig::default(), config)
        .map_err(|e| e.to_string())?;
    let mut rhos: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut counts = vec![0usize; p];
    for it in 0..iters {
        sampler.step().map_err(|e| e.to_string())?;
        if it >= burnin {
            let t = &sampler.state().params.terms[0];
            for k in 0..p {
                counts[k] += usize::from(t.gamma[k]);
                rhos[k].push(t.rho[k]);
            }
        }
    }
    let kept = (iters - burnin) as f64;
    let mut out: Vec<f64> = counts.iter().map(|&c| c as f64 / kept).collect();
    for r in &mut rhos {
        r.sort_by(f64::total_cmp);
        out.push(r[r.len() / 2]);
    }
    Ok(out)
}
