//! `gpvs diagnose`: per-parameter autocorrelation times and ESS of one run,
//! or a side-by-side efficiency table of two.

use std::fmt::Write as _;

use gpvs::dataset::ResponseKind;
use gpvs::kernel::KernelFamily;
use gpvs::sampler::{marginal_inclusion, ParameterSummary, PosteriorTrace};

use super::{ensure_dir, write_text};
use crate::config::usage;
use crate::rundir::{load_run, LoadedChain};
use crate::DiagnoseArgs;

struct Row {
    summary: ParameterSummary,
    ess_per_sec: Option<f64>,
}

/// Names of the monitored columns: `ρ` of every predictor whose inclusion
/// frequency in its term reaches the threshold, then the scalar
/// parameters the model samples.
fn monitored(trace: &PosteriorTrace, threshold: f64) -> Vec<String> {
    let mut names = Vec::new();
    for t in 0..trace.family.n_terms() {
        let suffix = if t == 0 { String::new() } else { (t + 1).to_string() };
        for k in 0..trace.p() {
            let bits = trace.column(&format!("gamma{suffix}_{}", k + 1)).unwrap_or_default();
            let freq = bits.iter().sum::<f64>() / bits.len().max(1) as f64;
            if freq >= threshold {
                names.push(format!("rho{suffix}_{}", k + 1));
            }
        }
    }
    names.push("lambda_a".into());
    names.push("lambda_z".into());
    if trace.family.n_terms() == 2 {
        names.push("lambda_z2".into());
    }
    match trace.kind {
        ResponseKind::Continuous => names.push("r".into()),
        ResponseKind::Count => names.push("tau".into()),
        _ => {}
    }
    if trace.family == KernelFamily::Matern {
        names.push("nu".into());
    }
    names
}

fn summarize(trace: &PosteriorTrace, names: &[String]) -> anyhow::Result<Vec<Row>> {
    names
        .iter()
        .map(|name| {
            let col = trace
                .column(name)
                .ok_or_else(|| anyhow::anyhow!("trace has no column `{name}`"))?;
            let summary = match ParameterSummary::from_samples(name.as_str(), &col) {
                Ok(s) => s,
                // Too short for an autocorrelation estimate: report as degenerate.
                Err(_) => ParameterSummary {
                    name: name.clone(),
                    mean: col.iter().sum::<f64>() / col.len().max(1) as f64,
                    tau: None,
                    ess: None,
                },
            };
            let ess_per_sec = summary.ess.map(|e| e / trace.wall_time);
            Ok(Row { summary, ess_per_sec })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "degenerate".into(), |x| format!("{x:.prec$}"))
}

fn describe(out: &mut String, chain: &LoadedChain, threshold: f64) -> anyhow::Result<Vec<Row>> {
    let t = &chain.trace;
    let _ = writeln!(out, "run: {}", chain.dir.display());
    let _ = writeln!(
        out,
        "  {} model, {} kernel, scheme {}, seed {}, chain {}",
        t.kind.name(),
        t.family.name(),
        chain.config.sampler.scheme.name(),
        t.seed,
        t.chain
    );
    let _ = writeln!(out, "  retained {}, wall time {:.3} s", t.len(), t.wall_time);
    let _ = writeln!(out, "acceptance rates:");
    for b in t.rates.iter().filter(|b| b.proposed > 0) {
        let _ = writeln!(out, "  {:<16} {:.4} ({}/{})", b.name, b.rate(), b.accepted, b.proposed);
    }
    let q = marginal_inclusion(t)?;
    let _ = writeln!(out, "inclusion >= {threshold}:");
    for (k, v) in q.iter().enumerate().filter(|(_, &v)| v >= threshold) {
        let _ = writeln!(out, "  {:<16} {v:.3}", t.names[k]);
    }
    let rows = summarize(t, &monitored(t, threshold))?;
    let _ = writeln!(out, "{:<12} {:>12} {:>12} {:>12} {:>12}", "parameter", "mean", "tau_ac", "ess", "ess/s");
    for r in &rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{:<12} {:>12.5} {:>12} {:>12} {:>12}",
            s.name,
            s.mean,
            fmt_opt(s.tau, 2),
            fmt_opt(s.ess, 1),
            fmt_opt(r.ess_per_sec, 3)
        );
    }
    let degenerate: Vec<&str> = rows
        .iter()
        .filter(|r| r.summary.is_degenerate())
        .map(|r| r.summary.name.as_str())
        .collect();
    if !degenerate.is_empty() {
        let _ = writeln!(out, "degenerate (constant) columns: {}", degenerate.join(", "));
    }
    Ok(rows)
}

fn single(args_dir: &std::path::Path) -> anyhow::Result<LoadedChain> {
    let mut chains = load_run(args_dir)?;
    if chains.len() > 1 {
        return Err(usage(format!(
            "{} holds {} chains; pass one chain directory such as {}",
            args_dir.display(),
            chains.len(),
            chains[0].dir.display()
        )));
    }
    Ok(chains.remove(0))
}

pub fn run(args: &DiagnoseArgs) -> anyhow::Result<()> {
    let runs = args.runs.iter().map(|d| single(d)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut out = String::new();
    let mut tables = Vec::new();
    for (i, chain) in runs.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        tables.push(describe(&mut out, chain, args.threshold)?);
    }
    if let [a, b] = tables.as_slice() {
        let _ = writeln!(out, "\ncomparison (A = {}, B = {}):", runs[0].dir.display(), runs[1].dir.display());
        let _ = writeln!(
            out,
            "{:<12} {:>12} {:>12} {:>12} {:>12} {:>10}",
            "parameter", "tau_ac A", "tau_ac B", "ess/s A", "ess/s B", "B/A"
        );
        for ra in a {
            let Some(rb) = b.iter().find(|r| r.summary.name == ra.summary.name) else {
                continue;
            };
            let ratio = match (ra.ess_per_sec, rb.ess_per_sec) {
                (Some(x), Some(y)) if x > 0.0 => format!("{:.2}", y / x),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "{:<12} {:>12} {:>12} {:>12} {:>12} {:>10}",
                ra.summary.name,
                fmt_opt(ra.summary.tau, 2),
                fmt_opt(rb.summary.tau, 2),
                fmt_opt(ra.ess_per_sec, 3),
                fmt_opt(rb.ess_per_sec, 3),
                ratio
            );
        }
    }
    ensure_dir(&args.out.out_dir)?;
    write_text(&args.out.out_dir.join("diagnostics.txt"), &out)?;
    print!("{out}");
    Ok(())
}
