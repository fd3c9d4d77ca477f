//! `gpvs simulate`: write a synthetic dataset and its truth manifest.

use std::fmt::Write as _;

use gpvs::dataset::{write_csv, ResponseKind};
use gpvs::simgen::{simulate, Copula, SimKernel, SimSpec};

use super::{ensure_dir, write_text};
use crate::config::usage;
use crate::SimulateArgs;

pub fn run(args: &SimulateArgs) -> anyhow::Result<()> {
    let kernel: SimKernel = args.kernel.parse().map_err(|e| usage(format!("--kernel: {e}")))?;
    let kind: ResponseKind = args.kind.parse().map_err(|e| usage(format!("--kind: {e}")))?;
    let mut spec = SimSpec::new(kernel, kind, args.n, args.p, args.seed);
    if let Some(s) = args.sigma {
        spec.sigma = s;
    }
    if let Some(c) = args.censor_rate {
        spec.censor_rate = c;
    }
    if let Some(b) = args.baseline_rate {
        spec.baseline_rate = b;
    }
    spec.copula = args.copula_columns.map(|columns| Copula {
        columns,
        correlation: args.copula_correlation,
    });
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let sim = simulate(&SimSpec {
        n: args.n + args.n_test,
        ..spec.clone()
    })?;
    let correlated = sim.correlated.clone();
    let (all, truth) = sim.into_model_data()?;
    let train_rows: Vec<usize> = (0..args.n).collect();
    let test_rows: Vec<usize> = (args.n..args.n + args.n_test).collect();
    let dir = &args.out.out_dir;
    ensure_dir(dir)?;
    let data_path = dir.join(format!("{}.csv", args.name));
    let mut files = vec![data_path.clone()];
    if args.n_test == 0 {
        write_csv(&data_path, &all, true)?;
    } else {
        let (train, test) = all.split(&train_rows, &test_rows)?;
        write_csv(&data_path, &train, true)?;
        let test_path = dir.join(format!("{}_test.csv", args.name));
        write_csv(&test_path, &test, true)?;
        files.push(test_path);
    }

    let mut m = String::new();
    let _ = writeln!(m, "kernel = {}", kernel.name());
    let _ = writeln!(m, "kind = {}", kind.name());
    let _ = writeln!(m, "n = {}", args.n);
    let _ = writeln!(m, "n_test = {}", args.n_test);
    let _ = writeln!(m, "p = {}", args.p);
    let _ = writeln!(m, "seed = {}", args.seed);
    match kind {
        ResponseKind::Continuous | ResponseKind::Binary => {
            let _ = writeln!(m, "sigma = {}", spec.sigma);
        }
        ResponseKind::Survival => {
            let _ = writeln!(m, "censor_rate = {}", spec.censor_rate);
            let _ = writeln!(m, "baseline_rate = {}", spec.baseline_rate);
        }
        ResponseKind::Count => {}
    }
    if let Some(c) = spec.copula {
        let _ = writeln!(m, "copula_columns = {}", c.columns);
        let _ = writeln!(m, "copula_correlation = {}", c.correlation);
        let tied: Vec<&str> = correlated.iter().map(|&k| all.names[k].as_str()).collect();
        let _ = writeln!(m, "correlated = {}", tied.join(","));
    }
    let names: Vec<&str> = truth.iter().map(|&k| all.names[k].as_str()).collect();
    let _ = writeln!(m, "truth = {}", names.join(","));
    let truth_path = dir.join(format!("{}_truth.txt", args.name));
    write_text(&truth_path, &m)?;
    files.push(truth_path);

    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
