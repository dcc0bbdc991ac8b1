use std::path::{Path, PathBuf};

use clap::Parser;

use predvoi::data::format_sig12;
use predvoi::model::{c_statistic, fit, predict};
use predvoi::netbenefit::decision_curve;
use predvoi::resample::coefficient_uncertainty;
use predvoi::rng::{domain, stream};
use predvoi::sweep::{doubling_sizes, run_sweep, save_sweep_csv, SweepConfig};
use predvoi::validation::{harrell_optimism, Metric};
use predvoi::voi::{results_to_json, run_voi, save_results_csv, write_posterior_csv, VoiConfig};

use crate::args::{parse_thresholds, Cli, Command, DcaArgs, FitArgs, ReplayArgs, SweepArgs, VoiArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{now, FileDigest, RunManifest};

/// Runs a parsed command; `argv` excludes the program name and is recorded
/// in the manifest.
pub fn dispatch(command: Command, argv: Vec<String>) -> CliResult<()> {
    let started_at = now();
    let (name, config, seed, out_dir, inputs, outputs) = match &command {
        Command::Fit(a) => (
            "fit",
            serde_json::to_value(a)?,
            a.run.seed,
            &a.run.out_dir,
            vec![a.data.data.clone()],
            run_fit(a)?,
        ),
        Command::Dca(a) => (
            "dca",
            serde_json::to_value(a)?,
            a.run.seed,
            &a.run.out_dir,
            vec![a.data.data.clone(), a.posterior.model.clone()],
            run_dca(a)?,
        ),
        Command::Voi(a) => (
            "voi",
            serde_json::to_value(a)?,
            a.run.seed,
            &a.run.out_dir,
            vec![a.data.data.clone(), a.posterior.model.clone()],
            run_voi_cmd(a)?,
        ),
        Command::Sweep(a) => (
            "sweep",
            serde_json::to_value(a)?,
            a.run.seed,
            &a.run.out_dir,
            vec![a.data.data.clone()],
            run_sweep_cmd(a)?,
        ),
        Command::Replay(a) => return replay(a),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: name.to_string(),
        argv,
        config,
        seed,
        inputs: inputs.iter().map(|p| FileDigest::of(p)).collect::<CliResult<_>>()?,
        outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<CliResult<_>>()?,
        started_at,
        finished_at: now(),
    };
    let path = manifest.save(out_dir)?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn prepare(out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    Ok(())
}

fn run_fit(a: &FitArgs) -> CliResult<Vec<PathBuf>> {
    let ds = a.data.load()?;
    let transform = a.spec.transform()?;
    let cfg = a.spec.fit_config();
    let model = fit(&ds, &transform, &cfg, &mut stream(a.run.seed, &[domain::PROPOSED_FIT]))?;
    prepare(&a.run.out_dir)?;
    let mut outputs = Vec::new();

    let model_path = a.run.out_dir.join("model.json");
    std::fs::write(&model_path, model.to_json()? + "\n")?;
    outputs.push(model_path);

    let table_path = a.run.out_dir.join("coefficients.csv");
    let mut table = String::new();
    if a.uncertainty {
        let rows = coefficient_uncertainty(&ds, &model, &cfg, a.n_boot, a.run.seed, a.run.threads)?;
        table.push_str("term,coefficient,selection_probability,ci_lower,ci_upper\n");
        for r in rows {
            table.push_str(&format!(
                "{},{},{:.2},{},{}\n",
                r.term,
                format_sig12(r.estimate),
                r.selection_probability,
                format_sig12(r.lower),
                format_sig12(r.upper)
            ));
        }
    } else {
        table.push_str("term,coefficient\n");
        table.push_str(&format!("(intercept),{}\n", format_sig12(model.intercept)));
        for (t, b) in model.terms.iter().zip(&model.coefficients) {
            table.push_str(&format!("{t},{}\n", format_sig12(*b)));
        }
    }
    std::fs::write(&table_path, table)?;
    outputs.push(table_path);

    let apparent = c_statistic(&predict(&model, &ds)?, ds.outcomes(), ds.weights())?;
    println!(
        "fitted {} of {} terms; apparent c-statistic {:.3}",
        model.nonzero_terms(),
        model.terms.len(),
        apparent
    );
    if a.optimism {
        let report = harrell_optimism(
            &ds,
            &model,
            &cfg,
            Metric::CStatistic,
            a.n_boot,
            &[],
            a.run.seed,
            a.run.threads,
        )?;
        let path = a.run.out_dir.join("c_statistic.csv");
        report.save_csv(&path)?;
        outputs.push(path);
        println!(
            "optimism-corrected c-statistic {:.3} ({} of {} refits failed)",
            report.corrected[0], report.n_failed, report.n_bootstraps
        );
    }
    Ok(outputs)
}

fn run_dca(a: &DcaArgs) -> CliResult<Vec<PathBuf>> {
    let ds = a.data.load()?;
    let model = a.posterior.load_model()?;
    let cfg = a.posterior.fit_config(&model);
    let grid = a.posterior.grid()?;
    let optimism = harrell_optimism(
        &ds,
        &model,
        &cfg,
        Metric::NbCurve,
        a.posterior.n_boot,
        &grid,
        a.run.seed,
        a.run.threads,
    )?;
    let run = run_voi(
        &ds,
        &model,
        &VoiConfig {
            n_draws: a.posterior.n_boot,
            kind: a.posterior.kind.into(),
            thresholds: grid.clone(),
            seed: a.run.seed,
            fit: cfg,
            threads: a.run.threads,
            keep_posterior: false,
        },
    )?;
    let curve = decision_curve(&ds, &model, &grid, &run.draws.draws, &optimism.optimism)?;
    prepare(&a.run.out_dir)?;
    let path = a.run.out_dir.join("decision_curve.csv");
    curve.save_csv(&path)?;
    println!("decision curve over {} thresholds", grid.len());
    Ok(vec![path])
}

fn run_voi_cmd(a: &VoiArgs) -> CliResult<Vec<PathBuf>> {
    let ds = a.data.load()?;
    let model = a.posterior.load_model()?;
    let cfg = VoiConfig {
        n_draws: a.posterior.n_boot,
        kind: a.posterior.kind.into(),
        thresholds: a.posterior.grid()?,
        seed: a.run.seed,
        fit: a.posterior.fit_config(&model),
        threads: a.run.threads,
        keep_posterior: a.dump_draws,
    };
    let run = run_voi(&ds, &model, &cfg)?;
    prepare(&a.run.out_dir)?;
    let csv_path = a.run.out_dir.join("voi.csv");
    save_results_csv(&run.results, &csv_path)?;
    let json_path = a.run.out_dir.join("voi.json");
    std::fs::write(&json_path, results_to_json(&run.results)? + "\n")?;
    let mut outputs = vec![csv_path, json_path];
    if a.dump_draws {
        let path = a.run.out_dir.join("posterior_draws.csv");
        write_posterior_csv(&run.posterior, std::fs::File::create(&path)?)?;
        outputs.push(path);
    }
    println!(
        "{} draws, {} replicates redrawn; results for {} thresholds",
        cfg.n_draws,
        run.redraws,
        run.results.len()
    );
    Ok(outputs)
}

fn run_sweep_cmd(a: &SweepArgs) -> CliResult<Vec<PathBuf>> {
    let donor = a.data.load()?;
    let fit_cfg = a.spec.fit_config();
    let thresholds = parse_thresholds(&a.thresholds)?;
    let cfg = SweepConfig {
        sizes: a.sizes.clone().unwrap_or_else(|| doubling_sizes(donor.n())),
        replicates: a.replicates,
        thresholds: thresholds.clone(),
        min_events: a.subsample_min_events,
        transform: a.spec.transform()?,
        fit: fit_cfg.clone(),
        voi: VoiConfig {
            n_draws: a.n_boot,
            kind: a.kind.into(),
            thresholds,
            fit: fit_cfg,
            ..VoiConfig::default()
        },
        seed: a.run.seed,
        threads: a.run.threads,
    };
    let rows = run_sweep(&donor, &cfg)?;
    prepare(&a.run.out_dir)?;
    let path = a.run.out_dir.join("sweep.csv");
    save_sweep_csv(&rows, &path)?;
    println!("{} sizes x {} replicates", cfg.sizes.len(), cfg.replicates);
    Ok(vec![path])
}

fn replay(a: &ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    manifest.verify_inputs()?;
    let mut argv = manifest.argv.clone();
    if let Some(dir) = &a.out_dir {
        argv = without_flag(&argv, "--out-dir");
        argv.push("--out-dir".into());
        argv.push(dir.display().to_string());
    }
    let cli = Cli::try_parse_from(std::iter::once("predvoi".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a manifest cannot record a replay".into()));
    }
    dispatch(cli.command, argv)
}

fn without_flag(argv: &[String], flag: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len());
    let mut skip = false;
    for arg in argv {
        if skip {
            skip = false;
        } else if arg == flag {
            skip = true;
        } else if !arg.starts_with(&format!("{flag}=")) {
            out.push(arg.clone());
        }
    }
    out
}
