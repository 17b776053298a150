use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgp_bench::config::{ExperimentConfig, ExperimentName};
use mgp_bench::csvio::write_predictions;
use mgp_bench::experiment::{replication, run_experiment, settings, shrinkage_fits, write_outputs, ParamRecord};
use mgp_bench::models::{train, ModelKind};
use mgp_bench::{BenchError, Result};
use mgp_core::infer::{cv_select_lambda, fit_pairwise_set};
use mgp_core::predict::select_related;
use mgp_core::structures::{make_arrowhead_spec, make_pairwise_spec, PairwiseVariant};

#[derive(Parser)]
#[command(name = "mgp", version, about = "Multi-output Gaussian process experiments")]
struct Cli {
    /// Flat `key = value` config file overriding the experiment preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; replication r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the first configured model and write params.json.
    Fit(DataArgs),
    /// Fit the first configured model and write predictions for each output it predicts.
    Predict(DataArgs),
    /// Fit regularized pairwise models around the target and flag related outputs.
    Select(DataArgs),
    /// Choose λ by cross-validation over the configured grid.
    Cv(DataArgs),
    /// Run a named experiment and write report.json, params.json, timings.json and predictions.
    Experiment {
        /// table1_sines, table2_shrinkage, lowdim_groups, gp_groups_20, gp_groups_50 or custom.
        name: String,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Preset supplying data and defaults (defaults to `custom` with --data, else table1_sines).
    #[arg(long)]
    experiment: Option<String>,
    /// CSV with columns output_id,x,y.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model to use instead of the configured one, e.g. mgp_2 or pairwise_b.
    #[arg(long)]
    model: Option<String>,
}

fn load_config(cli: &Cli, name: ExperimentName) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path, Some(name))?,
        None => ExperimentConfig::preset(name),
    };
    if let Some(seed) = cli.seed {
        cfg.fit.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn data_config(cli: &Cli, args: &DataArgs) -> Result<ExperimentConfig> {
    let name = match (&args.experiment, &args.data) {
        (Some(n), _) => n.parse()?,
        (None, Some(_)) => ExperimentName::Custom,
        (None, None) => ExperimentName::Table1Sines,
    };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path, Some(name))?,
        None => ExperimentConfig::preset(name),
    };
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(m) = &args.model {
        cfg.models = vec![m.parse()?];
    }
    if let Some(seed) = cli.seed {
        cfg.fit.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolved_model(cfg: &ExperimentConfig) -> Result<ModelKind> {
    match &cfg.models[0] {
        ModelKind::Subset { outputs, q } if outputs.is_empty() => {
            if cfg.subset.is_empty() {
                return Err(BenchError::Config("mgp_sub needs a `subset`".into()));
            }
            let mut outputs = vec![cfg.target];
            outputs.extend(cfg.subset.iter().copied().filter(|&i| i != cfg.target));
            Ok(ModelKind::Subset { outputs, q: *q })
        }
        other => Ok(other.clone()),
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, file: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
        path: dir.into(),
        source,
    })?;
    let path = dir.join(file);
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(&path, text).map_err(|source| BenchError::Io { path, source })?;
    println!("wrote {}", dir.join(file).display());
    Ok(())
}

fn cmd_fit(cfg: &ExperimentConfig, predict: bool) -> Result<()> {
    let rep = replication(cfg, 0)?;
    let kind = resolved_model(cfg)?;
    let model = train(&kind, &rep.train, cfg.target, &settings(cfg, 0))?;
    let records: Vec<ParamRecord> = model
        .fits
        .iter()
        .zip(&model.covered)
        .map(|(f, outputs)| ParamRecord {
            model: kind.label(),
            replication: 0,
            outputs: outputs.clone(),
            objective: f.final_objective.total,
            converged: f.converged,
            spec: f.spec.clone(),
        })
        .collect();
    for (r, f) in records.iter().zip(&model.fits) {
        println!(
            "{} outputs {:?}: objective {:.6} after {} iterations ({})",
            r.model,
            r.outputs,
            r.objective,
            f.iterations,
            if r.converged { "converged" } else { "not converged" }
        );
    }
    for (p, e) in &model.failed_pairs {
        eprintln!("pair with output {p} failed: {e}");
    }
    if !predict {
        return write_json(&cfg.out_dir, "params.json", &records);
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| BenchError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    for (i, xs) in rep.grid.iter().enumerate() {
        if model.predicts(i) {
            let path = cfg.out_dir.join(format!("predictions_{i}.csv"));
            write_predictions(&path, xs, &model.predict(i, xs)?)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn pairwise_variant(kind: &ModelKind) -> PairwiseVariant {
    match kind {
        ModelKind::PairwiseA => PairwiseVariant::TwoLatent,
        _ => PairwiseVariant::SharedPrivate,
    }
}

fn cmd_select(cfg: &ExperimentConfig) -> Result<()> {
    let rep = replication(cfg, 0)?;
    let s = settings(cfg, 0);
    let set = fit_pairwise_set(
        &rep.train,
        cfg.target,
        pairwise_variant(&cfg.models[0]),
        &s.kernel,
        &s.penalty,
        &s.fit,
    )?;
    let fits: Vec<_> = set.iter().filter_map(|f| f.result.as_ref().ok()).collect();
    for f in &set {
        if let Err(e) = &f.result {
            eprintln!("pair with output {} failed: {e}", f.partner);
        }
    }
    let selection = select_related(&fits, cfg.tau)?;
    for s in &selection.scores {
        println!(
            "partner {:>3}  score {:.3e}  {}",
            s.partner,
            s.score,
            if s.related { "related" } else { "-" }
        );
    }
    write_json(&cfg.out_dir, "selection.json", &selection)
}

fn cmd_cv(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.lambda_grid.is_empty() {
        return Err(BenchError::Config("cv needs a `lambda_grid`".into()));
    }
    let rep = replication(cfg, 0)?;
    let kind = resolved_model(cfg)?;
    let proto = cfg.kernel_proto();
    let n = rep.train.n_outputs();
    let s = settings(cfg, 0);
    let result = match kind {
        ModelKind::PairwiseB => serde_json::to_value(
            shrinkage_fits(cfg, 0, &rep.train)?
                .into_iter()
                .map(|(r, _)| r)
                .collect::<Vec<_>>(),
        )?,
        ModelKind::PairwiseA => {
            let mut rows = Vec::new();
            for partner in (0..n).filter(|&i| i != cfg.target) {
                let sub = rep.train.subset(&[cfg.target, partner])?;
                let template = make_pairwise_spec(PairwiseVariant::TwoLatent, cfg.target, partner, &proto, 1.0)?;
                let cv = cv_select_lambda(
                    &template,
                    &sub,
                    &cfg.penalty_spec(0.0),
                    &cfg.lambda_grid,
                    cfg.cv_folds,
                    &s.fit,
                )?;
                rows.push(serde_json::json!({ "partner": partner, "lambda": cv.lambda, "scores": cv.scores }));
            }
            serde_json::Value::Array(rows)
        }
        ModelKind::Arrowhead => {
            let template = make_arrowhead_spec(n, cfg.target, &proto, 1.0)?;
            serde_json::to_value(cv_select_lambda(
                &template,
                &rep.train,
                &cfg.penalty_spec(0.0),
                &cfg.lambda_grid,
                cfg.cv_folds,
                &s.fit,
            )?)?
        }
        other => {
            return Err(BenchError::Config(format!(
                "cv applies to penalized models (arrowhead, pairwise_a, pairwise_b), not {other}"
            )))
        }
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    write_json(&cfg.out_dir, "cv.json", &result)
}

fn cmd_experiment(cfg: &ExperimentConfig) -> Result<()> {
    let run = run_experiment(cfg)?;
    write_outputs(&run, &cfg.out_dir)?;
    println!("{:<14} {:>14}   per replication", "model", "median MSE");
    for m in &run.report.models {
        let median = m.median_mse.map_or("-".to_string(), |v| format!("{v:.6}"));
        let reps: Vec<String> = m
            .mse
            .iter()
            .map(|v| v.map_or("fail".into(), |v| format!("{v:.4}")))
            .collect();
        println!("{:<14} {:>14}   {}", m.model, median, reps.join(" "));
    }
    for row in &run.report.information_transfer {
        println!("IT(rep {}) = {:.6}", row.replication, row.report.it_value);
    }
    for row in &run.report.shrinkage {
        println!(
            "rep {} partner {}: lambda {} alpha_shared_target {:.3e} alpha_shared_partner {:.3e}",
            row.replication, row.partner, row.lambda, row.alpha_shared_target, row.alpha_shared_partner
        );
    }
    for f in &run.report.failures {
        eprintln!("failure: {} (rep {}): {}", f.model, f.replication, f.message);
    }
    println!("wrote {}", cfg.out_dir.join("report.json").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| BenchError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Fit(args) => cmd_fit(&data_config(cli, args)?, false),
        Command::Predict(args) => cmd_fit(&data_config(cli, args)?, true),
        Command::Select(args) => cmd_select(&data_config(cli, args)?),
        Command::Cv(args) => cmd_cv(&data_config(cli, args)?),
        Command::Experiment { name } => {
            let cfg = load_config(cli, name.parse()?)?;
            cfg.validate()?;
            cmd_experiment(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
