//! Posterior traces and their on-disk form: a CSV with one row per
//! retained iteration, a plain-text manifest, and the posterior mean of the
//! latent values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::ResponseKind;
use crate::kernel::{KernelFamily, KernelParams};
use crate::likelihood::NuisanceBlock;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Add,
    Delete,
    Swap,
    Keep,
    Between,
    Within,
}

impl MoveKind {
    pub fn name(self) -> &'static str {
        match self {
            MoveKind::Add => "add",
            MoveKind::Delete => "delete",
            MoveKind::Swap => "swap",
            MoveKind::Keep => "keep",
            MoveKind::Between => "between",
            MoveKind::Within => "within",
        }
    }

    /// Moves that may change the selection.
    pub fn is_between(self) -> bool {
        matches!(self, MoveKind::Add | MoveKind::Delete | MoveKind::Swap | MoveKind::Between)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoveRecord {
    pub iteration: u32,
    pub kind: MoveKind,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub params: KernelParams,
    pub h: NuisanceBlock,
    pub z: Option<Vec<f64>>,
}

/// Acceptance counts of one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRate {
    pub name: String,
    pub accepted: u64,
    pub proposed: u64,
}

impl BlockRate {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorTrace {
    pub family: KernelFamily,
    pub kind: ResponseKind,
    pub names: Vec<String>,
    pub records: Vec<TraceRecord>,
    pub moves: Vec<MoveRecord>,
    pub rates: Vec<BlockRate>,
    /// Posterior mean of the latent values at the training points, over
    /// all post-burn-in iterations.
    pub latent_mean: Option<Vec<f64>>,
    pub warnings: Vec<String>,
    /// Seconds spent in the sampling loop.
    pub wall_time: f64,
    pub seed: u64,
    pub chain: u64,
}

impl PosteriorTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// `ρ_{t,k}` across retained records.
    pub fn rho_series(&self, term: usize, k: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.params.terms[term].rho[k]).collect()
    }

    pub fn rate(&self, block: &str) -> Option<f64> {
        self.rates.iter().find(|b| b.name == block).map(BlockRate::rate)
    }

    /// Every scalar column of the CSV form, by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let header = trace_header(self.family, self.p());
        let idx = header.iter().position(|h| h == name)?;
        Some(self.records.iter().map(|r| record_row(r)[idx]).collect())
    }
}

/// CSV header: `gamma_1..p, rho_1..p`, the same for the second term of a
/// two-term kernel (`gamma2_`, `rho2_`), then `lambda_a, lambda_z`,
/// `lambda_z2` for two terms, `r, tau`, and `nu` for the Matérn kernel.
pub fn trace_header(family: KernelFamily, p: usize) -> Vec<String> {
    let mut h = Vec::new();
    for t in 0..family.n_terms() {
        let suffix = if t == 0 { String::new() } else { (t + 1).to_string() };
        h.extend((1..=p).map(|k| format!("gamma{suffix}_{k}")));
        h.extend((1..=p).map(|k| format!("rho{suffix}_{k}")));
    }
    h.push("lambda_a".into());
    h.push("lambda_z".into());
    if family.n_terms() == 2 {
        h.push("lambda_z2".into());
    }
    h.push("r".into());
    h.push("tau".into());
    if family == KernelFamily::Matern {
        h.push("nu".into());
    }
    h
}

fn record_row(r: &TraceRecord) -> Vec<f64> {
    let mut row = Vec::new();
    for t in &r.params.terms {
        row.extend(t.gamma.iter().map(|&g| f64::from(u8::from(g))));
        row.extend(&t.rho);
    }
    row.push(r.params.lambda_a);
    row.extend(r.params.terms.iter().map(|t| t.lambda_z));
    row.push(r.h.r);
    row.push(r.h.tau);
    if r.params.family == KernelFamily::Matern {
        row.push(r.params.nu);
    }
    row
}

/// Write the retained records. Values use Rust's shortest round-trip
/// formatting, so reading the file back reproduces them exactly.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &PosteriorTrace) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(trace.family, trace.p()))?;
    for r in &trace.records {
        w.write_record(record_row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read records written by [`write_trace_csv`]. Record iterations are the
/// row positions.
pub fn read_trace_csv(path: impl AsRef<Path>, family: KernelFamily) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    let p = header.iter().filter(|h| h.starts_with("gamma_")).count();
    let expected = trace_header(family, p);
    if header != expected {
        return Err(Error::Config(format!(
            "{} does not have the {} trace layout",
            path.display(),
            family.name()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let vals = row
            .iter()
            .zip(&header)
            .map(|(v, name)| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 2,
                    column: name.clone(),
                    value: v.to_owned(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut params = KernelParams::new(family, p);
        let mut pos = 0;
        for t in 0..family.n_terms() {
            for k in 0..p {
                params.terms[t].gamma[k] = vals[pos + k] != 0.0;
                params.terms[t].rho[k] = vals[pos + p + k];
            }
            pos += 2 * p;
        }
        params.lambda_a = vals[pos];
        pos += 1;
        for t in 0..family.n_terms() {
            params.terms[t].lambda_z = vals[pos];
            pos += 1;
        }
        let h = NuisanceBlock {
            r: vals[pos],
            tau: vals[pos + 1],
        };
        pos += 2;
        if family == KernelFamily::Matern {
            params.nu = vals[pos];
        }
        out.push(TraceRecord {
            iteration: i,
            params,
            h,
            z: None,
        });
    }
    Ok(out)
}

/// Plain-text run manifest: the configuration echo as `key = value` lines,
/// then acceptance rates, warnings and wall time.
pub fn write_manifest(
    path: impl AsRef<Path>,
    config_echo: &[(String, String)],
    trace: &PosteriorTrace,
) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (k, v) in config_echo {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "retained = {}", trace.len());
    for b in &trace.rates {
        let _ = writeln!(
            s,
            "acceptance.{} = {:.4} ({}/{})",
            b.name,
            b.rate(),
            b.accepted,
            b.proposed
        );
    }
    for (i, w) in trace.warnings.iter().enumerate() {
        let _ = writeln!(s, "warning.{} = {}", i + 1, w);
    }
    let _ = writeln!(s, "wall_time_seconds = {:.3}", trace.wall_time);
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_latent_mean(path: impl AsRef<Path>, z: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["z_mean"])?;
    for v in z {
        w.write_record([v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_latent_mean(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    rd.records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            let v = r.get(0).unwrap_or("");
            v.trim().parse().map_err(|_| Error::Parse {
                line: i + 2,
                column: "z_mean".into(),
                value: v.to_owned(),
            })
        })
        .collect()
}
