//! `gpvs predict`: predictions CSV, survivor curves for survival data and
//! a metrics file.

use std::fmt::Write as _;

use anyhow::Context;
use gpvs::dataset::{load_csv_scaled, Response, ResponseKind};
use gpvs::predict::{
    classify, kaplan_meier, metrics, predictive_mean, response_scale, survivor_curve, PredictOptions,
};

use super::{ensure_dir, write_text};
use crate::config::usage;
use crate::rundir::{load_data, load_run, pool};
use crate::PredictArgs;

fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn run(args: &PredictArgs) -> anyhow::Result<()> {
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(usage("--threshold must lie in (0, 1]"));
    }
    if args.subsample == 0 || args.grid_points < 2 {
        return Err(usage("--subsample must be positive and --grid-points at least 2"));
    }
    let (_, rc, trace) = pool(load_run(&args.run)?)?;
    let train_path = args
        .data
        .clone()
        .or(rc.data.clone())
        .ok_or_else(|| usage("the run records no training data; pass --data"))?;
    let loaded = load_data(&rc, &train_path)?;
    let train = loaded.train;
    // `row` in the output: line of the test file, or of the data file for held-out rows.
    let (test, rows) = match (&args.test, loaded.held_out, &rc.test) {
        (Some(path), _, _) | (None, None, Some(path)) => {
            let t = load_csv_scaled(path, &rc.response, &train.scaling)
                .with_context(|| format!("loading {}", path.display()))?;
            let rows = (1..=t.n()).collect();
            (t, rows)
        }
        (None, Some((held, idx)), _) => (held, idx.iter().map(|r| r + 1).collect::<Vec<_>>()),
        (None, None, None) => {
            return Err(usage("no test data: pass --test, or record `test` or `holdout` when fitting"))
        }
    };
    if train.names != trace.names {
        anyhow::bail!("{} does not have the predictors the run was fitted to", train_path.display());
    }
    let opts = PredictOptions {
        threshold: args.threshold,
        subsample: args.subsample,
        latent_jitter: rc.model.latent_jitter,
    };

    let out = &args.out.out_dir;
    ensure_dir(out)?;
    let mut report = String::new();
    let mut table = String::new();
    let pred = predictive_mean(&trace, &train, &test.x, &opts)?;
    let selected: Vec<&str> = trace
        .names
        .iter()
        .zip(&pred.selected)
        .filter(|(_, &s)| s)
        .map(|(n, _)| n.as_str())
        .collect();
    let _ = writeln!(report, "test_rows = {}", test.n());
    let _ = writeln!(report, "draws_used = {}", pred.draws_used);
    let _ = writeln!(report, "selected = {}", selected.join(","));

    match &test.response {
        Response::Continuous(_) | Response::Count(_) => {
            let y_hat = response_scale(rc.kind, &pred.y_hat);
            let y = test.response.as_reals();
            table.push_str("row,latent,prediction,observed\n");
            for i in 0..test.n() {
                let _ = writeln!(table, "{},{},{},{}", rows[i], pred.y_hat[i], y_hat[i], y[i]);
            }
            let m = metrics(&y, &y_hat)?;
            let _ = writeln!(report, "normalized_mspe = {:.6}", m.normalized_mspe);
            let _ = writeln!(report, "rmspe = {:.6}", m.rmspe);
            let _ = writeln!(report, "r2 = {:.6}", m.r2);
        }
        Response::Binary(t) => {
            let labels = classify(&trace, &train, &test.x, rc.model.link, &opts)?;
            table.push_str("row,latent,class,observed\n");
            for i in 0..test.n() {
                let _ = writeln!(table, "{},{},{},{}", rows[i], pred.y_hat[i], u8::from(labels[i]), u8::from(t[i]));
            }
            let wrong = labels.iter().zip(t).filter(|(a, b)| a != b).count();
            let _ = writeln!(report, "misclassified = {wrong}");
            let _ = writeln!(report, "error_rate = {:.6}", wrong as f64 / test.n() as f64);
        }
        Response::Survival { time, event } => {
            let t_max = args.grid_max.unwrap_or_else(|| quantile(time, 0.9));
            if !(t_max > 0.0) {
                return Err(usage("--grid-max must be positive"));
            }
            let step = t_max / (args.grid_points - 1) as f64;
            let grid: Vec<f64> = (0..args.grid_points).map(|i| i as f64 * step).collect();
            let surv = survivor_curve(&trace, &train, &test.x, &grid, &opts)?;
            let mean = surv.mean_curve();
            let km = kaplan_meier(time, event, &grid).ok();
            let mut curves = String::from("time,mean_survivor,baseline_survivor,kaplan_meier\n");
            for (j, t) in grid.iter().enumerate() {
                let k = km.as_ref().map_or(String::new(), |v| v[j].to_string());
                let _ = writeln!(curves, "{t},{},{},{k}", mean[j], surv.baseline[j]);
            }
            write_text(&out.join("survivor.csv"), &curves)?;
            table.push_str("row,risk_score,time,event\n");
            for i in 0..test.n() {
                let _ = writeln!(table, "{},{},{},{}", rows[i], surv.z_test[i], time[i], u8::from(event[i]));
            }
            if let Some(km) = km {
                let sup = mean.iter().zip(&km).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let _ = writeln!(report, "km_sup_distance = {sup:.6}");
            }
            let _ = writeln!(report, "grid_max = {t_max}");
        }
    }
    for w in &pred.warnings {
        let _ = writeln!(report, "# warning: {w}");
    }
    write_text(&out.join("predictions.csv"), &table)?;
    write_text(&out.join("metrics.txt"), &report)?;
    print!("{report}");
    if rc.kind == ResponseKind::Survival {
        println!("survivor curves in {}", out.join("survivor.csv").display());
    }
    Ok(())
}
