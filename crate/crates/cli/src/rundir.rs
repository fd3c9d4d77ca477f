//! On-disk layout of a fit and reading it back.
//!
//! A single-chain fit writes `trace.csv`, `manifest.txt` and, for the
//! latent models, `latent_mean.csv` into the output directory. With several
//! chains each one gets a `chain<c>/` subdirectory holding the same files;
//! its manifest re-runs that chain alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use gpvs::dataset::{load_csv_with, ModelData};
use gpvs::kernel::KernelFamily;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use gpvs::sampler::{read_latent_mean, read_trace_csv, BlockRate, PosteriorTrace};

use crate::config::{usage, RunConfig, Settings};

pub const TRACE: &str = "trace.csv";
pub const MANIFEST: &str = "manifest.txt";
pub const LATENT: &str = "latent_mean.csv";
pub const SCALING: &str = "scaling.csv";
pub const HOLDOUT: &str = "holdout.csv";

pub fn chain_dir(out: &Path, chain: usize) -> PathBuf {
    out.join(format!("chain{chain}"))
}

/// Training and held-out row indices, each ascending. The shuffle has its
/// own generator so it never shares draws with the sampler.
pub fn holdout_rows(n: usize, fraction: f64, seed: u64) -> anyhow::Result<(Vec<usize>, Vec<usize>)> {
    let n_test = (fraction * n as f64).round() as usize;
    if n_test == 0 || n < n_test + 2 {
        return Err(usage(format!("holdout {fraction} of {n} rows leaves no usable split")));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut test, mut train) = (rows[..n_test].to_vec(), rows[n_test..].to_vec());
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// A run's training data and, when it holds rows out, the test part with
/// the original (0-based) row of each test observation.
pub struct Loaded {
    pub train: ModelData,
    pub held_out: Option<(ModelData, Vec<usize>)>,
}

pub fn load_data(rc: &RunConfig, path: &Path) -> anyhow::Result<Loaded> {
    let data =
        load_csv_with(path, &rc.response, rc.scaling).with_context(|| format!("loading {}", path.display()))?;
    if rc.holdout == 0.0 {
        return Ok(Loaded {
            train: data,
            held_out: None,
        });
    }
    let (train_rows, test_rows) = holdout_rows(data.n(), rc.holdout, rc.sampler.seed)?;
    let (train, test) = data.split(&train_rows, &test_rows)?;
    Ok(Loaded {
        train,
        held_out: Some((test, test_rows)),
    })
}

/// One chain read back from disk.
pub struct LoadedChain {
    pub dir: PathBuf,
    pub settings: Settings,
    pub config: RunConfig,
    pub trace: PosteriorTrace,
}

fn manifest_map(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .collect())
}

/// `acceptance.<block> = 0.4123 (41/100)`
fn parse_rate(name: &str, value: &str) -> Option<BlockRate> {
    let counts = value.split_once('(')?.1.trim_end_matches(')');
    let (a, p) = counts.split_once('/')?;
    Some(BlockRate {
        name: name.to_owned(),
        accepted: a.trim().parse().ok()?,
        proposed: p.trim().parse().ok()?,
    })
}

pub fn load_chain(dir: &Path) -> anyhow::Result<LoadedChain> {
    let manifest = dir.join(MANIFEST);
    if !manifest.exists() {
        bail!("{} has no {MANIFEST}", dir.display());
    }
    let mut settings = Settings::default();
    settings.load_file(&manifest)?;
    let config = settings.resolve()?;
    let map = manifest_map(&manifest)?;
    let family: KernelFamily = settings.get("family").parse()?;
    let records = read_trace_csv(dir.join(TRACE), family)?;
    let p = records.first().map_or(0, |r| r.params.p());
    let names: Vec<String> = match map.get("predictors") {
        Some(list) if !list.is_empty() => list.split(',').map(str::to_owned).collect(),
        _ => (1..=p).map(|k| format!("x{k}")).collect(),
    };
    if names.len() != p {
        bail!("{} lists {} predictors but the trace has {p}", manifest.display(), names.len());
    }
    let latent_path = dir.join(LATENT);
    let latent_mean = if latent_path.exists() {
        Some(read_latent_mean(&latent_path)?)
    } else {
        None
    };
    let rates = map
        .iter()
        .filter_map(|(k, v)| parse_rate(k.strip_prefix("acceptance.")?, v))
        .collect();
    let warnings = map
        .iter()
        .filter(|(k, _)| k.starts_with("warning."))
        .map(|(_, v)| v.clone())
        .collect();
    let trace = PosteriorTrace {
        family,
        kind: config.kind,
        names,
        records,
        moves: Vec::new(),
        rates,
        latent_mean,
        warnings,
        wall_time: map.get("wall_time_seconds").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN),
        seed: config.sampler.seed,
        chain: config.sampler.chain,
    };
    Ok(LoadedChain {
        dir: dir.to_owned(),
        settings,
        config,
        trace,
    })
}

/// Every chain of a run directory, or the directory itself when it holds a
/// single chain.
pub fn load_run(dir: &Path) -> anyhow::Result<Vec<LoadedChain>> {
    if dir.join(TRACE).exists() {
        return Ok(vec![load_chain(dir)?]);
    }
    let mut chains = Vec::new();
    for c in 0.. {
        let d = chain_dir(dir, c);
        if !d.join(TRACE).exists() {
            break;
        }
        chains.push(load_chain(&d)?);
    }
    if chains.is_empty() {
        bail!("no {TRACE} found in {} or its chain directories", dir.display());
    }
    Ok(chains)
}

/// Concatenate the chains' records; the latent means average because every
/// chain ran the same number of iterations.
pub fn pool(chains: Vec<LoadedChain>) -> anyhow::Result<(Settings, RunConfig, PosteriorTrace)> {
    let mut it = chains.into_iter();
    let first = it.next().context("no chains to pool")?;
    let (settings, config, mut trace) = (first.settings, first.config, first.trace);
    let mut n = 1.0;
    for c in it {
        if c.trace.family != trace.family || c.trace.names != trace.names {
            bail!("chain {} does not match the first chain's model", c.dir.display());
        }
        trace.records.extend(c.trace.records);
        match (&mut trace.latent_mean, c.trace.latent_mean) {
            (Some(acc), Some(z)) if acc.len() == z.len() => {
                for (a, b) in acc.iter_mut().zip(z) {
                    *a = (*a * n + b) / (n + 1.0);
                }
            }
            (None, None) => {}
            _ => bail!("chains disagree on the stored latent means"),
        }
        n += 1.0;
    }
    Ok((settings, config, trace))
}
