//! `gpvs fit`: resolve the configuration, run the chains in parallel and
//! write one trace, manifest and latent mean per chain.

use std::fmt::Write as _;
use std::path::Path;

use gpvs::dataset::ModelData;
use gpvs::sampler::{marginal_inclusion, run_chain, write_latent_mean, write_manifest, write_trace_csv, PosteriorTrace};

use super::{ensure_dir, write_text};
use crate::config::{usage, Settings};
use crate::rundir::{chain_dir, load_data, HOLDOUT, LATENT, MANIFEST, SCALING, TRACE};
use crate::FitArgs;

fn settings_from(args: &FitArgs) -> anyhow::Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &args.config {
        s.load_file(path)?;
    }
    let path_str = |p: &Path| p.to_string_lossy().into_owned();
    let kind = args.kind.clone();
    let survival = kind
        .as_deref()
        .unwrap_or(s.get("kind"))
        .parse::<gpvs::dataset::ResponseKind>()
        .is_ok_and(|k| k == gpvs::dataset::ResponseKind::Survival);
    let flags: Vec<(&str, Option<String>)> = vec![
        ("data", args.data.as_deref().map(path_str)),
        ("test", args.test.as_deref().map(path_str)),
        ("holdout", args.holdout.map(|v| v.to_string())),
        ("kind", kind),
        (if survival { "time_column" } else { "response" }, args.response.clone()),
        ("event_column", args.event.clone()),
        ("family", args.family.clone()),
        ("scheme", args.scheme.clone()),
        ("iters", args.iters.map(|v| v.to_string())),
        ("burnin", args.burnin.map(|v| v.to_string())),
        ("thin", args.thin.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("chains", args.chains.map(|v| v.to_string())),
        ("projection_ratio", args.projection_ratio.map(|v| v.to_string())),
        ("alpha", args.alpha.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            s.set(key, &v)?;
        }
    }
    for pair in &args.set {
        s.set_pair(pair)?;
    }
    Ok(s)
}

fn write_scaling(path: &Path, data: &ModelData) -> anyhow::Result<()> {
    let mut text = String::from("predictor,offset,spread\n");
    for (k, name) in data.names.iter().enumerate() {
        let _ = writeln!(text, "{name},{},{}", data.scaling.offsets[k], data.scaling.spreads[k]);
    }
    write_text(path, &text)
}

fn write_chain(dir: &Path, settings: &Settings, trace: &PosteriorTrace) -> anyhow::Result<()> {
    ensure_dir(dir)?;
    write_trace_csv(dir.join(TRACE), trace)?;
    let mut echo = settings.echo();
    echo.push(("predictors".into(), trace.names.join(",")));
    write_manifest(dir.join(MANIFEST), &echo, trace)?;
    if let Some(z) = &trace.latent_mean {
        write_latent_mean(dir.join(LATENT), z)?;
    }
    Ok(())
}

pub fn run(args: &FitArgs) -> anyhow::Result<()> {
    let settings = settings_from(args)?;
    let rc = settings.resolve()?;
    let data_path = rc
        .data
        .clone()
        .ok_or_else(|| usage("no training data: pass --data or set `data` in the config"))?;
    let loaded = load_data(&rc, &data_path)?;
    let data = loaded.train;
    rc.prior.validate(data.p()).map_err(|e| usage(e.to_string()))?;

    let first = rc.sampler.chain;
    let results: Vec<gpvs::Result<PosteriorTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..rc.chains)
            .map(|c| {
                let config = gpvs::sampler::SamplerConfig {
                    chain: first + c as u64,
                    ..rc.sampler.clone()
                };
                let (data, model, prior) = (&data, &rc.model, &rc.prior);
                scope.spawn(move || run_chain(&config, data, model, prior))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    });
    let traces = results.into_iter().collect::<gpvs::Result<Vec<_>>>()?;

    let out = &args.out.out_dir;
    ensure_dir(out)?;
    write_scaling(&out.join(SCALING), &data)?;
    if let Some((_, rows)) = &loaded.held_out {
        let text: String = rows.iter().map(|r| format!("{}\n", r + 1)).collect();
        write_text(&out.join(HOLDOUT), &format!("data_row\n{text}"))?;
    }
    for (c, trace) in traces.iter().enumerate() {
        if rc.chains == 1 {
            write_chain(out, &settings, trace)?;
        } else {
            let mut own = settings.clone();
            own.set("chains", "1")?;
            own.set("first_chain", &(first + c as u64).to_string())?;
            write_chain(&chain_dir(out, c), &own, trace)?;
        }
    }

    println!(
        "fitted {} model ({} kernel, scheme {}) to {} rows x {} predictors",
        rc.kind.name(),
        rc.model.family.name(),
        rc.sampler.scheme.name(),
        data.n(),
        data.p()
    );
    for trace in &traces {
        let q = marginal_inclusion(trace)?;
        let selected: Vec<String> = q
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 0.5)
            .map(|(k, v)| format!("{} ({v:.2})", trace.names[k]))
            .collect();
        let rates: Vec<String> = trace
            .rates
            .iter()
            .filter(|b| b.proposed > 0)
            .map(|b| format!("{} {:.2}", b.name, b.rate()))
            .collect();
        println!("chain {}: {:.1}s, {} records", trace.chain, trace.wall_time, trace.len());
        println!("  selected: {}", if selected.is_empty() { "none".into() } else { selected.join(", ") });
        println!("  acceptance: {}", rates.join(", "));
    }
    println!("normalization constants in {}", out.join(SCALING).display());
    Ok(())
}
