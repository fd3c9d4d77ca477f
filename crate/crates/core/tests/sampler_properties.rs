//! Statistical and structural properties of the samplers: invariance of
//! the prior when the likelihood is switched off, invariance of the latent
//! proposals, agreement with a one-dimensional quadrature posterior, and
//! bookkeeping of the trace and move log.

mod common;

use gpvs::dataset::{ModelData, ResponseKind};
use gpvs::kernel::KernelFamily;
use gpvs::prior::{InclusionPrior, PriorConfig, Slab};
use gpvs::sampler::{KeepMode, ModelSpec, MoveKind, Sampler, SamplerConfig, Scheme};
use gpvs::simgen::{generate, SimKernel, SimSpec};
use statrs::distribution::{Beta, ContinuousCDF};

fn within_3se(name: &str, xs: &[f64], want: f64) {
    let (mean, se) = common::mean_and_se(xs);
    assert!((mean - want).abs() <= 3.0 * se, "{name}: mean {mean:.5}, expected {want:.5}, se {se:.5}");
}

fn continuous_data(n: usize, p: usize, seed: u64) -> ModelData {
    generate(&SimSpec::new(SimKernel::Small4, ResponseKind::Continuous, n, p, seed))
        .unwrap()
        .0
}

#[test]
fn prior_recovery_scheme_one() {
    common::prior_recovery(Scheme::One).unwrap();
}

#[test]
fn prior_recovery_scheme_two() {
    common::prior_recovery(Scheme::Two).unwrap();
}

#[test]
fn prior_recovery_adaptive_scheme_two() {
    common::prior_recovery(Scheme::TwoAdaptive).unwrap();
}

#[test]
fn prior_recovery_scheme_one_joint_keep() {
    let p = 4;
    let data = continuous_data(8, p, 2);
    let prior = PriorConfig {
        inclusion: InclusionPrior::FixedAlpha(0.4),
        slab: Slab::Beta { a: 2.0, b: 3.0 },
        ..PriorConfig::default()
    };
    let config = SamplerConfig {
        scheme: Scheme::One,
        keep_mode: KeepMode::Joint,
        iters: 200_000,
        burnin: 2_000,
        use_likelihood: false,
        seed: 22,
        ..SamplerConfig::default()
    };
    let trace = Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), prior, config)
        .unwrap()
        .run()
        .unwrap();
    let incl: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.params.terms[0].n_included() as f64 / p as f64)
        .collect();
    within_3se("joint keep inclusion", &incl, 0.4);
    let low: Vec<f64> = trace
        .records
        .iter()
        .map(|r| {
            let t = &r.params.terms[0];
            (0..p).filter(|&k| t.gamma[k] && t.rho[k] < 0.4).count() as f64 / p as f64
        })
        .collect();
    let slab = Beta::new(2.0, 3.0).unwrap();
    within_3se("joint keep slab mass below 0.4", &low, 0.4 * slab.cdf(0.4));
}

#[test]
fn latent_proposal_preserves_prior() {
    common::latent_invariance(false).unwrap();
}

#[test]
fn latent_laplace_move_preserves_prior() {
    common::latent_invariance(true).unwrap();
}

#[test]
fn rho_posterior_matches_quadrature() {
    let sup = common::rho_quadrature_sup().unwrap();
    assert!(sup <= 0.05, "CDF sup-distance {sup}");
}

#[test]
fn identical_seeds_give_identical_traces() {
    for (scheme, kind) in [
        (Scheme::One, ResponseKind::Continuous),
        (Scheme::TwoAdaptive, ResponseKind::Continuous),
        (Scheme::Two, ResponseKind::Count),
    ] {
        let a = common::short_run(scheme, kind, 7, 0);
        let b = common::short_run(scheme, kind, 7, 0);
        assert_eq!(common::fingerprint(&a), common::fingerprint(&b));
        let other_seed = common::short_run(scheme, kind, 8, 0);
        assert_ne!(common::fingerprint(&a), common::fingerprint(&other_seed));
        let other_chain = common::short_run(scheme, kind, 7, 1);
        assert_ne!(common::fingerprint(&a), common::fingerprint(&other_chain));
    }
}

#[test]
fn trace_bookkeeping() {
    let p = 6;
    for scheme in [Scheme::One, Scheme::Two, Scheme::TwoAdaptive] {
        let trace = common::short_run(scheme, ResponseKind::Continuous, 9, 0);
        assert_eq!(trace.records.len(), 100);
        for (i, r) in trace.records.iter().enumerate() {
            assert_eq!(r.iteration, 50 + i);
            let t = &r.params.terms[0];
            for k in 0..p {
                assert_eq!(!t.gamma[k], t.rho[k] == 1.0, "spike state broken at k={k}");
                assert!(t.rho[k] >= 0.0 && t.rho[k] <= 1.0);
            }
        }
        let count = |kind: MoveKind| trace.moves.iter().filter(|m| m.kind == kind).count();
        match scheme {
            Scheme::One => {
                assert_eq!(count(MoveKind::Add) + count(MoveKind::Delete) + count(MoveKind::Swap), 150);
                assert_eq!(count(MoveKind::Between), 0);
            }
            _ => {
                assert_eq!(count(MoveKind::Between), 150 * p);
                assert_eq!(count(MoveKind::Add) + count(MoveKind::Keep), 0);
            }
        }
        for b in &trace.rates {
            assert!(b.accepted <= b.proposed);
        }
    }
}

#[test]
fn thinning_and_burnin_set_the_record_count() {
    let data = continuous_data(20, 4, 6);
    let config = SamplerConfig {
        iters: 103,
        burnin: 10,
        thin: 7,
        ..SamplerConfig::default()
    };
    assert_eq!(config.retained(), 13);
    let trace = Sampler::new(&data, ModelSpec::new(KernelFamily::Exp1), PriorConfig::default(), config)
        .unwrap()
        .run()
        .unwrap();
    assert_eq!(trace.records.len(), 13);
    assert!(trace.records.iter().all(|r| (r.iteration - 10 + 1) % 7 == 0));
}
