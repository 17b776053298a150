//! Experiment runner: data per replication, model sweep, scoring and report
//! files.

use std::path::Path;
use std::time::Instant;

use mgp_core::infer::{cv_select_lambda, fit, FittedModel};
use mgp_core::kernels::KernelSpec;
use mgp_core::predict::{
    information_transfer, select_related, ITReport, ModelTarget, PairwiseEnsemble, PredictiveGaussian, Selection,
};
use mgp_core::structures::{make_full_spec, make_pairwise_spec, Dataset, MgpSpec, OutputSeries, PairwiseVariant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentName};
use crate::csvio::{load_csv, write_predictions};
use crate::data::{
    gen_gp_draws, gen_groups_with, gen_sines, groups_mean, linspace, mse, sines_mean, GpSetting, GROUP_NOISE,
};
use crate::error::{io_err, BenchError, Result};
use crate::models::{train, ModelKind, TrainSettings, TrainedModel};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    /// Scored MSE per replication; `None` when the fit failed or nothing was
    /// scored.
    pub mse: Vec<Option<f64>>,
    pub median_mse: Option<f64>,
    /// `per_output_mse[r][i]` for every output the model predicts.
    pub per_output_mse: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItRow {
    pub replication: usize,
    pub report: ITReport,
}

/// Fitted shared-latent amplitudes of one regularized shared/private pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageRow {
    pub replication: usize,
    pub partner: usize,
    pub lambda: f64,
    pub cv_scores: Vec<(f64, f64)>,
    /// Shared-latent amplitude into the target.
    pub alpha_shared_target: f64,
    /// Shared-latent amplitude into the partner.
    pub alpha_shared_partner: f64,
    pub ell_shared_target: f64,
    pub ell_shared_partner: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub replication: usize,
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub model: String,
    pub replication: usize,
    pub message: String,
}

/// Everything written to `report.json`. Wall-clock times live in
/// `timings.json` so that the report is a pure function of config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub experiment: String,
    pub seed: u64,
    pub replications: usize,
    pub target: usize,
    pub models: Vec<ModelSummary>,
    pub information_transfer: Vec<ItRow>,
    pub shrinkage: Vec<ShrinkageRow>,
    pub selection: Vec<SelectionRow>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub model: String,
    pub replication: usize,
    /// Dataset outputs in the fit's local order.
    pub outputs: Vec<usize>,
    pub objective: f64,
    pub converged: bool,
    pub spec: MgpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model: String,
    pub replication: usize,
    pub seconds: f64,
}

/// Report plus the side outputs of a run.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub params: Vec<ParamRecord>,
    pub timings: Vec<Timing>,
    /// `(model label, output, xs, predictions)` for replication 0.
    pub predictions: Vec<(String, usize, Vec<f64>, Vec<PredictiveGaussian>)>,
}

/// Training data and scoring targets of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub train: Dataset,
    /// Held-out inputs and truths per output; `None` for unscored outputs.
    pub test: Vec<Option<OutputSeries>>,
    /// Grid used for prediction files.
    pub grid: Vec<Vec<f64>>,
}

/// Builds replication `rep` of `cfg`; generators use seed `cfg.fit.seed + rep`.
pub fn replication(cfg: &ExperimentConfig, rep: usize) -> Result<Replication> {
    let seed = cfg.fit.seed.wrapping_add(rep as u64);
    let t = cfg.target;
    let scored = |n: usize, f: &dyn Fn(usize) -> OutputSeries| -> Vec<Option<OutputSeries>> {
        (0..n).map(|i| Some(f(i))).collect()
    };
    let rep = match cfg.experiment {
        ExperimentName::Table1Sines | ExperimentName::Table2Shrinkage => {
            let train = gen_sines(seed, cfg.train_points, cfg.noise);
            let xs = linspace(0.0, 10.0, cfg.test_points);
            let test = scored(3, &|i| {
                OutputSeries::new(xs.clone(), xs.iter().map(|&x| sines_mean(i, x)).collect())
            });
            Replication {
                train,
                test,
                grid: vec![xs; 3],
            }
        }
        ExperimentName::LowdimGroups => {
            let train = gen_groups_with(seed, cfg.train_points, &GROUP_NOISE);
            let xs = linspace(0.0, 0.8, cfg.test_points);
            let test = scored(8, &|i| {
                OutputSeries::new(xs.clone(), xs.iter().map(|&x| groups_mean(i, x)).collect())
            });
            Replication {
                train,
                test,
                grid: vec![xs; 8],
            }
        }
        ExperimentName::GpGroups20 | ExperimentName::GpGroups50 => {
            let setting = if cfg.experiment == ExperimentName::GpGroups20 {
                GpSetting::N20
            } else {
                GpSetting::N50
            };
            let draws = gen_gp_draws(seed, setting);
            let test = draws.test();
            let n = test.n_outputs();
            Replication {
                train: draws.train(),
                grid: vec![draws.full.outputs[0].x.clone(); n],
                test: test.outputs.into_iter().map(Some).collect(),
            }
        }
        ExperimentName::Custom => {
            let path = cfg
                .data
                .as_ref()
                .ok_or_else(|| BenchError::Config("custom experiments need `data`".into()))?;
            let loaded = load_csv(path, cfg.standardize)?;
            let mut train = Vec::new();
            let mut test = Vec::new();
            let mut grid = Vec::new();
            for o in loaded.dataset.outputs {
                if o.len() <= cfg.holdout {
                    return Err(BenchError::Config(format!(
                        "holdout {} leaves no training data for an output with {} points",
                        cfg.holdout,
                        o.len()
                    )));
                }
                let cut = o.len() - cfg.holdout;
                let lo = o.x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = o.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                grid.push(linspace(lo, hi, cfg.test_points));
                test.push((cfg.holdout > 0).then(|| OutputSeries::new(o.x[cut..].to_vec(), o.y[cut..].to_vec())));
                train.push(OutputSeries::new(o.x[..cut].to_vec(), o.y[..cut].to_vec()));
            }
            Replication {
                train: Dataset::new(train)?,
                test,
                grid,
            }
        }
    };
    if t >= rep.train.n_outputs() {
        return Err(BenchError::Config(format!(
            "target {t} out of range for {} outputs",
            rep.train.n_outputs()
        )));
    }
    Ok(rep)
}

/// Outputs of the `mgp_sub` model: the configured subset, else the target's
/// true group.
fn subset_outputs(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let t = cfg.target;
    if !cfg.subset.is_empty() {
        let mut out = vec![t];
        out.extend(cfg.subset.iter().copied().filter(|&i| i != t));
        return Ok(out);
    }
    match cfg.experiment {
        ExperimentName::LowdimGroups => Ok(vec![t, t ^ 1]),
        ExperimentName::GpGroups20 | ExperimentName::GpGroups50 => {
            let setting = if cfg.experiment == ExperimentName::GpGroups20 {
                GpSetting::N20
            } else {
                GpSetting::N50
            };
            let blocks = setting.blocks();
            let mut out = vec![t];
            out.extend((0..blocks.len()).filter(|&i| i != t && blocks[i] == blocks[t]));
            Ok(out)
        }
        _ => Err(BenchError::Config(
            "mgp_sub needs a `subset` for this experiment".into(),
        )),
    }
}

fn resolve(kind: &ModelKind, cfg: &ExperimentConfig) -> Result<ModelKind> {
    Ok(match kind {
        ModelKind::Subset { outputs, q } if outputs.is_empty() => ModelKind::Subset {
            outputs: subset_outputs(cfg)?,
            q: *q,
        },
        other => other.clone(),
    })
}

pub fn settings(cfg: &ExperimentConfig, rep: usize) -> TrainSettings {
    TrainSettings {
        kernel: cfg.kernel_proto(),
        penalty: cfg.penalty_spec(cfg.lambda),
        fit: cfg.fit.clone().with_seed(cfg.fit.seed.wrapping_add(rep as u64)),
        weighting: cfg.weighting,
    }
}

/// MSE over the scored outputs a model predicts, averaged. `only_target`
/// restricts scoring to one output.
fn score(
    model: &TrainedModel,
    rep: &Replication,
    only_target: Option<usize>,
) -> Result<(Option<f64>, Vec<Option<f64>>)> {
    let mut per_output = Vec::with_capacity(rep.test.len());
    for (i, test) in rep.test.iter().enumerate() {
        let value = match test {
            Some(t) if model.predicts(i) && only_target.is_none_or(|o| o == i) => {
                let means: Vec<f64> = model.predict(i, &t.x)?.iter().map(|p| p.mean).collect();
                Some(mse(&means, &t.y)?)
            }
            _ => None,
        };
        per_output.push(value);
    }
    let values: Vec<f64> = per_output.iter().flatten().copied().collect();
    let overall = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    Ok((overall, per_output))
}

fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

struct ModelOutcome {
    label: String,
    mse: Option<f64>,
    per_output: Vec<Option<f64>>,
    params: Vec<ParamRecord>,
    seconds: f64,
    failure: Option<String>,
    predictions: Vec<(usize, Vec<f64>, Vec<PredictiveGaussian>)>,
    model: Option<TrainedModel>,
}

fn params_of(label: &str, rep: usize, model: &TrainedModel) -> Vec<ParamRecord> {
    model
        .fits
        .iter()
        .zip(&model.covered)
        .map(|(f, outputs)| ParamRecord {
            model: label.to_string(),
            replication: rep,
            outputs: outputs.clone(),
            objective: f.final_objective.total,
            converged: f.converged,
            spec: f.spec.clone(),
        })
        .collect()
}

fn run_model(cfg: &ExperimentConfig, kind: &ModelKind, rep_idx: usize, rep: &Replication) -> ModelOutcome {
    let label = kind.label();
    let only_target = match cfg.experiment {
        ExperimentName::Table1Sines | ExperimentName::Custom => None,
        _ => Some(cfg.target),
    };
    let start = Instant::now();
    let attempt = || -> Result<(TrainedModel, Option<f64>, Vec<Option<f64>>)> {
        let kind = resolve(kind, cfg)?;
        let model = train(&kind, &rep.train, cfg.target, &settings(cfg, rep_idx))?;
        let (overall, per_output) = score(&model, rep, only_target)?;
        Ok((model, overall, per_output))
    };
    let result = attempt();
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok((model, mse, per_output)) => {
            let mut predictions = Vec::new();
            if rep_idx == 0 {
                for (i, xs) in rep.grid.iter().enumerate() {
                    if let Ok(p) = model.predict(i, xs) {
                        predictions.push((i, xs.clone(), p));
                    }
                }
            }
            let mut failure = None;
            if !model.failed_pairs.is_empty() {
                let pairs: Vec<String> = model
                    .failed_pairs
                    .iter()
                    .map(|(p, e)| format!("partner {p}: {e}"))
                    .collect();
                failure = Some(pairs.join("; "));
            }
            ModelOutcome {
                params: params_of(&label, rep_idx, &model),
                label,
                mse,
                per_output,
                seconds,
                failure,
                predictions,
                model: Some(model),
            }
        }
        Err(e) => ModelOutcome {
            label,
            mse: None,
            per_output: vec![None; rep.test.len()],
            params: Vec::new(),
            seconds,
            failure: Some(e.to_string()),
            predictions: Vec::new(),
            model: None,
        },
    }
}

/// Information transfer for the target: the `mgp_1` fit on every output
/// against an independent GP on the target alone, scored on the target's
/// held-out data.
fn it_for(cfg: &ExperimentConfig, rep_idx: usize, rep: &Replication, full: &TrainedModel) -> Result<ITReport> {
    let t = cfg.target;
    let test = rep.test[t]
        .as_ref()
        .ok_or_else(|| BenchError::Config("target has no held-out data".into()))?;
    let full_target = full
        .predictor(t)
        .ok_or_else(|| BenchError::Config("mgp_1 does not predict the target".into()))?;
    let s = settings(cfg, rep_idx);
    let single = make_full_spec(1, 1, &s.kernel, 1.0)?;
    let alone = fit(
        &single,
        &rep.train.subset(&[t])?,
        &mgp_core::objective::PenaltySpec::none(),
        &s.fit,
    )?;
    let alone = ModelTarget::new(&alone, 0)?;
    Ok(information_transfer(full_target, &alone, test, t, vec![t])?)
}

/// Regularized shared/private pairs of the target with λ chosen per pair by
/// cross-validation over `lambda_grid` (or fixed at `lambda`).
pub fn shrinkage_fits(
    cfg: &ExperimentConfig,
    rep_idx: usize,
    data: &Dataset,
) -> Result<Vec<(ShrinkageRow, FittedModel)>> {
    let t = cfg.target;
    let s = settings(cfg, rep_idx);
    let proto = cfg.kernel_proto();
    (0..data.n_outputs())
        .filter(|&i| i != t)
        .map(|partner| {
            let sub = data.subset(&[t, partner])?;
            let template = make_pairwise_spec(PairwiseVariant::SharedPrivate, t, partner, &proto, 1.0)?;
            let (lambda, cv_scores) = if cfg.lambda_grid.is_empty() {
                (cfg.lambda, Vec::new())
            } else {
                let cv = cv_select_lambda(
                    &template,
                    &sub,
                    &cfg.penalty_spec(0.0),
                    &cfg.lambda_grid,
                    cfg.cv_folds,
                    &s.fit,
                )?;
                (cv.lambda, cv.scores)
            };
            let m = fit(&template, &sub, &cfg.penalty_spec(lambda), &s.fit)?;
            let shared = |i: usize| m.spec.kernel(0, i).map(kernel_amp_ell).unwrap_or((0.0, 0.0));
            let (a_t, l_t) = shared(0);
            let (a_p, l_p) = shared(1);
            let row = ShrinkageRow {
                replication: rep_idx,
                partner,
                lambda,
                cv_scores,
                alpha_shared_target: a_t,
                alpha_shared_partner: a_p,
                ell_shared_target: l_t,
                ell_shared_partner: l_p,
                score: mgp_core::predict::pair_score(&m.spec)?,
            };
            Ok((row, m))
        })
        .collect()
}

fn kernel_amp_ell(k: &KernelSpec) -> (f64, f64) {
    (k.amplitudes().first().copied().unwrap_or(0.0), k.effective_length())
}

struct RepOutcome {
    models: Vec<ModelOutcome>,
    it: Option<std::result::Result<ITReport, String>>,
    shrinkage: Vec<ShrinkageRow>,
    selection: Option<Selection>,
    extra_failures: Vec<(String, String)>,
}

fn run_replication(cfg: &ExperimentConfig, rep_idx: usize) -> Result<RepOutcome> {
    let rep = replication(cfg, rep_idx)?;
    let mut extra_failures = Vec::new();
    let mut shrinkage = Vec::new();
    let mut selection = None;
    let mut models = Vec::new();

    if cfg.experiment == ExperimentName::Table2Shrinkage {
        let start = Instant::now();
        let label = ModelKind::PairwiseB.label();
        match shrinkage_fits(cfg, rep_idx, &rep.train) {
            Ok(pairs) => {
                let fits: Vec<&FittedModel> = pairs.iter().map(|(_, m)| m).collect();
                match select_related(&fits, cfg.tau) {
                    Ok(s) => selection = Some(s),
                    Err(e) => extra_failures.push(("selection".into(), e.to_string())),
                }
                let trained = PairwiseEnsemble::new(&fits, cfg.weighting)
                    .map_err(BenchError::from)
                    .and_then(|ens| {
                        let test = rep.test[cfg.target].as_ref().expect("sinusoid outputs are scored");
                        let means = test
                            .x
                            .iter()
                            .map(|&x| mgp_core::predict::TargetPredictor::predict_target(&ens, x).map(|p| p.mean))
                            .collect::<mgp_core::Result<Vec<f64>>>()?;
                        let preds = rep.grid[cfg.target]
                            .iter()
                            .map(|&x| mgp_core::predict::TargetPredictor::predict_target(&ens, x))
                            .collect::<mgp_core::Result<Vec<_>>>()?;
                        Ok((mse(&means, &test.y)?, preds))
                    });
                let params = pairs
                    .iter()
                    .map(|(row, m)| ParamRecord {
                        model: label.clone(),
                        replication: rep_idx,
                        outputs: vec![cfg.target, row.partner],
                        objective: m.final_objective.total,
                        converged: m.converged,
                        spec: m.spec.clone(),
                    })
                    .collect();
                shrinkage = pairs.into_iter().map(|(r, _)| r).collect();
                let (mse_value, failure, predictions) = match trained {
                    Ok((v, p)) => (
                        Some(v),
                        None,
                        if rep_idx == 0 {
                            vec![(cfg.target, rep.grid[cfg.target].clone(), p)]
                        } else {
                            Vec::new()
                        },
                    ),
                    Err(e) => (None, Some(e.to_string()), Vec::new()),
                };
                let mut per_output = vec![None; rep.test.len()];
                per_output[cfg.target] = mse_value;
                models.push(ModelOutcome {
                    label,
                    mse: mse_value,
                    per_output,
                    params,
                    seconds: start.elapsed().as_secs_f64(),
                    failure,
                    predictions,
                    model: None,
                });
            }
            Err(e) => models.push(ModelOutcome {
                label,
                mse: None,
                per_output: vec![None; rep.test.len()],
                params: Vec::new(),
                seconds: start.elapsed().as_secs_f64(),
                failure: Some(e.to_string()),
                predictions: Vec::new(),
                model: None,
            }),
        }
    } else {
        models = cfg.models.iter().map(|k| run_model(cfg, k, rep_idx, &rep)).collect();
    }

    let mut it = None;
    if cfg.experiment == ExperimentName::Table1Sines {
        if let Some(full) = models
            .iter()
            .zip(&cfg.models)
            .find(|(_, k)| **k == ModelKind::FullQ { q: 1 })
            .and_then(|(o, _)| o.model.as_ref())
        {
            it = Some(it_for(cfg, rep_idx, &rep, full).map_err(|e| e.to_string()));
        }
    }
    for m in &mut models {
        m.model = None;
    }
    Ok(RepOutcome {
        models,
        it,
        shrinkage,
        selection,
        extra_failures,
    })
}

/// Runs every replication (in parallel) and assembles the report in
/// replication order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let outcomes: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<Result<_>>()?;

    let labels: Vec<String> = outcomes[0].models.iter().map(|m| m.label.clone()).collect();
    let mut summaries: Vec<ModelSummary> = labels
        .iter()
        .map(|l| ModelSummary {
            model: l.clone(),
            mse: Vec::new(),
            median_mse: None,
            per_output_mse: Vec::new(),
        })
        .collect();
    let mut failures = Vec::new();
    let mut params = Vec::new();
    let mut timings = Vec::new();
    let mut predictions = Vec::new();
    let mut it_rows = Vec::new();
    let mut shrinkage = Vec::new();
    let mut selection = Vec::new();
    for (r, out) in outcomes.into_iter().enumerate() {
        for (summary, m) in summaries.iter_mut().zip(out.models) {
            summary.mse.push(m.mse);
            summary.per_output_mse.push(m.per_output);
            if let Some(message) = m.failure {
                failures.push(Failure {
                    model: m.label.clone(),
                    replication: r,
                    message,
                });
            }
            params.extend(m.params);
            timings.push(Timing {
                model: m.label.clone(),
                replication: r,
                seconds: m.seconds,
            });
            predictions.extend(m.predictions.into_iter().map(|(i, xs, p)| (m.label.clone(), i, xs, p)));
        }
        match out.it {
            Some(Ok(report)) => it_rows.push(ItRow { replication: r, report }),
            Some(Err(message)) => failures.push(Failure {
                model: "information_transfer".into(),
                replication: r,
                message,
            }),
            None => {}
        }
        shrinkage.extend(out.shrinkage);
        if let Some(s) = out.selection {
            selection.push(SelectionRow {
                replication: r,
                selection: s,
            });
        }
        failures.extend(out.extra_failures.into_iter().map(|(model, message)| Failure {
            model,
            replication: r,
            message,
        }));
    }
    for s in &mut summaries {
        s.median_mse = median(&s.mse);
    }
    Ok(ExperimentRun {
        report: ExperimentReport {
            schema: REPORT_SCHEMA,
            experiment: cfg.experiment.as_str().into(),
            seed: cfg.fit.seed,
            replications: cfg.replications,
            target: cfg.target,
            models: summaries,
            information_transfer: it_rows,
            shrinkage,
            selection,
            failures,
        },
        params,
        timings,
        predictions,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes `report.json`, `params.json`, `timings.json` and
/// `<model>/predictions_<output>.csv` under `dir`.
pub fn write_outputs(run: &ExperimentRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("report.json"), &run.report)?;
    write_json(&dir.join("params.json"), &run.params)?;
    write_json(&dir.join("timings.json"), &run.timings)?;
    for (label, output, xs, preds) in &run.predictions {
        let sub = dir.join(label);
        std::fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        write_predictions(&sub.join(format!("predictions_{output}.csv")), xs, preds)?;
    }
    Ok(())
}
