//! Multi-restart fitting, batch pairwise fitting and cross-validated choice
//! of the penalty weight.

mod lbfgs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};
use crate::kernels::KernelSpec;
use crate::numerics::finite_diff_grad;
use crate::objective::{penalized_nll, penalized_nll_with_grad, ObjectiveValue, PenaltySpec};
use crate::predict::Predictor;
use crate::structures::{make_pairwise_spec, Dataset, MgpSpec, OutputSeries, PairwiseVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Closed-form gradients.
    #[default]
    Analytic,
    /// Central differences of the objective.
    FiniteDiff,
    /// Closed-form gradients, verified against differences at every restart's
    /// starting point.
    Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub gradient_mode: GradientMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 500,
            rel_tol: 1e-8,
            seed: 0,
            init_scale: 0.5,
            gradient_mode: GradientMode::Analytic,
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(MgpError::InvalidSpec("restarts must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(MgpError::InvalidSpec("rel_tol must be positive".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(MgpError::InvalidSpec("init_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of [`fit`]: the best restart plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: MgpSpec,
    /// Training data, kept for prediction.
    pub data: Dataset,
    pub penalty: PenaltySpec,
    pub final_objective: ObjectiveValue,
    /// Final penalized objective of every restart; `None` when it failed.
    pub restart_objectives: Vec<Option<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

fn median_spacing(x: &[f64]) -> f64 {
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// Data-driven starting point: amplitudes split the output's root mean
/// square across its kernels, the length-scales of the kernels feeding an
/// output alternate between one and four median input spacings, and noise
/// starts at 5% of the variance.
pub fn initial_spec(template: &MgpSpec, data: &Dataset) -> Result<MgpSpec> {
    template.validate()?;
    data.validate()?;
    if template.n_outputs != data.n_outputs() {
        return Err(MgpError::DimensionMismatch {
            expected: template.n_outputs,
            found: data.n_outputs(),
        });
    }
    let mut spec = template.clone();
    for i in 0..spec.n_outputs {
        let y = &data.outputs[i].y;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let scale = if rms > 0.0 { rms } else { 1.0 };
        let spacing = median_spacing(&data.outputs[i].x);
        let feeding = (0..spec.n_latents())
            .filter(|&q| spec.kernel(q, i).is_some())
            .count()
            .max(1);
        let amp = scale / (feeding as f64).sqrt();
        let mut seen = 0;
        for q in 0..spec.n_latents() {
            let mult = if seen % 2 == 0 { 1.0 } else { 4.0 };
            if spec.kernel(q, i).is_some() {
                seen += 1;
            }
            match spec.kernel_mut(q, i) {
                Some(KernelSpec::Se(k)) => {
                    k.alpha = amp;
                    k.ell = spacing * mult;
                }
                Some(KernelSpec::Spectral(k)) => {
                    let c = k.components.len() as f64;
                    for (m, comp) in k.components.iter_mut().enumerate() {
                        comp.a = amp / c.sqrt();
                        comp.sigma = 1.0 / (spacing * mult);
                        comp.mu = (m + 1) as f64 / (spacing * mult);
                    }
                }
                None => {}
            }
        }
        let v = if var > 0.0 { var } else { scale * scale };
        spec.noise[i] = (0.05 * v).max(1e-8);
    }
    Ok(spec)
}

fn perturb(base: &[f64], n_kernel: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter()
        .enumerate()
        .map(|(k, &v)| {
            let z: f64 = StandardNormal.sample(rng);
            if k < n_kernel {
                v * (scale * z).exp()
            } else {
                v + scale * z
            }
        })
        .collect()
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64 + 1);
    rng
}

fn gradient_check(spec: &MgpSpec, data: &Dataset, pen: &PenaltySpec, p: &[f64]) -> Result<()> {
    let s = spec.with_params(p)?;
    let (_, analytic) = penalized_nll_with_grad(&s, data, pen)?;
    let numeric = finite_diff_grad(
        |t| {
            spec.with_params(t)
                .and_then(|s| penalized_nll(&s, data, pen))
                .map_or(f64::NAN, |v| v.total)
        },
        p,
    )?;
    for (index, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        if (a - n).abs() > 1e-4 * a.abs().max(n.abs()) + 1e-6 {
            return Err(MgpError::GradientCheckFailed {
                index,
                analytic: a,
                numeric: n,
            });
        }
    }
    Ok(())
}

struct RestartOutcome {
    params: Vec<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
}

fn run_restart(
    spec: &MgpSpec,
    data: &Dataset,
    pen: &PenaltySpec,
    opts: &FitOptions,
    start: Vec<f64>,
) -> Result<RestartOutcome> {
    if opts.gradient_mode == GradientMode::Check {
        gradient_check(spec, data, pen, &start)?;
    }
    let mut last_err = None;
    let evaluate = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let s = spec.with_params(p)?;
        match opts.gradient_mode {
            GradientMode::Analytic | GradientMode::Check => {
                let (v, g) = penalized_nll_with_grad(&s, data, pen)?;
                Ok((v.total, g))
            }
            GradientMode::FiniteDiff => {
                let v = penalized_nll(&s, data, pen)?.total;
                let g = finite_diff_grad(
                    |t| {
                        spec.with_params(t)
                            .and_then(|s| penalized_nll(&s, data, pen))
                            .map_or(f64::NAN, |v| v.total)
                    },
                    p,
                )?;
                Ok((v, g))
            }
        }
    };
    let found = lbfgs::minimize(
        |p| match evaluate(p) {
            Ok(v) => Some(v),
            Err(e) => {
                last_err = Some(e);
                None
            }
        },
        start,
        opts.max_iters,
        opts.rel_tol,
    );
    match found {
        Some(m) => Ok(RestartOutcome {
            params: m.x,
            value: m.f,
            converged: m.converged,
            iterations: m.iterations,
        }),
        None => Err(last_err.unwrap_or(MgpError::NonFiniteObjective)),
    }
}

/// Minimizes the penalized objective from `opts.restarts` starting points and
/// keeps the best result. Restart 0 starts at [`initial_spec`]; later
/// restarts perturb it multiplicatively with a stream derived from
/// `opts.seed`, so results are reproducible bit for bit.
pub fn fit(spec: &MgpSpec, data: &Dataset, pen: &PenaltySpec, opts: &FitOptions) -> Result<FittedModel> {
    check_fit_inputs(data, pen, opts)?;
    fit_from(&initial_spec(spec, data)?, data, pen, opts)
}

fn check_fit_inputs(data: &Dataset, pen: &PenaltySpec, opts: &FitOptions) -> Result<()> {
    opts.validate()?;
    pen.validate()?;
    if data.outputs.iter().any(OutputSeries::is_empty) {
        return Err(MgpError::InsufficientData(
            "every modeled output needs observations".into(),
        ));
    }
    Ok(())
}

/// Like [`fit`], but restart 0 starts from the parameters of `start` and
/// later restarts perturb those. Useful for following a penalty path from a
/// previous solution.
pub fn fit_from(start: &MgpSpec, data: &Dataset, pen: &PenaltySpec, opts: &FitOptions) -> Result<FittedModel> {
    check_fit_inputs(data, pen, opts)?;
    start.validate()?;
    let init = start.clone();
    let base = init.to_params();
    let n_kernel = init.n_kernel_params();
    // Surface configuration errors (e.g. a penalty on a topology without
    // targets) before spending any optimization effort.
    if let Err(e @ MgpError::InvalidPenaltyConfig(_)) = penalized_nll(&init, data, pen) {
        return Err(e);
    }

    let outcomes: Vec<Result<RestartOutcome>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                base.clone()
            } else {
                perturb(&base, n_kernel, opts.init_scale, &mut restart_rng(opts.seed, r))
            };
            run_restart(&init, data, pen, opts, start)
        })
        .collect();

    if let Some(Err(e @ MgpError::GradientCheckFailed { .. })) = outcomes.iter().find(|o| o.is_err()) {
        return Err(e.clone());
    }
    let restart_objectives: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().ok().map(|o| o.value)).collect();
    let best = outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok())
        .min_by(|a, b| a.value.total_cmp(&b.value));
    let Some(best) = best else {
        let last = outcomes
            .into_iter()
            .rev()
            .find_map(|o| o.err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(MgpError::AllRestartsFailed {
            restarts: opts.restarts,
            last,
        });
    };
    let fitted = init.with_params(&best.params)?;
    let final_objective = penalized_nll(&fitted, data, pen)?;
    Ok(FittedModel {
        spec: fitted,
        data: data.clone(),
        penalty: pen.clone(),
        final_objective,
        restart_objectives,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// One bivariate submodel of a pairwise fit.
#[derive(Debug, Clone)]
pub struct PairwiseFit {
    /// Index of the partner output in the original dataset.
    pub partner: usize,
    pub result: Result<FittedModel>,
}

/// Fits one bivariate model `(target, i)` for every other output `i`. Each
/// submodel uses the same options and seed, so a submodel depends only on
/// its own pair of outputs. Individual failures are reported per pair; the
/// call fails only if every pair fails.
pub fn fit_pairwise_set(
    data: &Dataset,
    target: usize,
    variant: PairwiseVariant,
    proto: &KernelSpec,
    pen: &PenaltySpec,
    opts: &FitOptions,
) -> Result<Vec<PairwiseFit>> {
    let n = data.n_outputs();
    if n < 2 {
        return Err(MgpError::InsufficientData(
            "pairwise fitting needs at least two outputs".into(),
        ));
    }
    if target >= n {
        return Err(MgpError::InvalidTarget { target, n_outputs: n });
    }
    let partners: Vec<usize> = (0..n).filter(|&i| i != target).collect();
    let fits: Vec<PairwiseFit> = partners
        .par_iter()
        .map(|&partner| {
            let result = data.subset(&[target, partner]).and_then(|sub| {
                let spec = make_pairwise_spec(variant, target, partner, proto, 1.0)?;
                fit(&spec, &sub, pen, opts)
            });
            PairwiseFit { partner, result }
        })
        .collect();
    if fits.iter().all(|f| f.result.is_err()) {
        let last = fits
            .iter()
            .rev()
            .find_map(|f| f.result.as_ref().err())
            .map(|e| e.to_string())
            .unwrap_or_default();
        return Err(MgpError::AllRestartsFailed {
            restarts: fits.len(),
            last,
        });
    }
    Ok(fits)
}

/// Outcome of [`cv_select_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub lambda: f64,
    /// `(λ, mean held-out MSE)` in grid order; failed λ score `+∞`.
    pub scores: Vec<(f64, f64)>,
}

/// Contiguous block `fold` of `0..n` split into `folds` parts.
fn fold_range(n: usize, folds: usize, fold: usize) -> std::ops::Range<usize> {
    (fold * n / folds)..((fold + 1) * n / folds)
}

/// Chooses λ by k-fold cross-validation. Fold `f` holds out the `f`-th
/// contiguous block of every output; the score is the mean squared error of
/// the predictive means over all held-out points. The smallest score wins and
/// ties go to the larger λ.
pub fn cv_select_lambda(
    template: &MgpSpec,
    data: &Dataset,
    base: &PenaltySpec,
    grid: &[f64],
    folds: usize,
    opts: &FitOptions,
) -> Result<CvSelection> {
    if grid.is_empty() {
        return Err(MgpError::InvalidPenaltyConfig("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(MgpError::InsufficientData(
            "cross-validation needs at least two folds".into(),
        ));
    }
    data.validate()?;
    if let Some(short) = data.outputs.iter().position(|o| o.len() <= folds) {
        return Err(MgpError::InsufficientData(format!(
            "output {short} has {} points, too few for {folds} folds",
            data.outputs[short].len()
        )));
    }
    for &l in grid {
        PenaltySpec {
            lambda: l,
            ..base.clone()
        }
        .validate()?;
    }

    let splits: Vec<(Dataset, Vec<OutputSeries>)> = (0..folds)
        .map(|f| {
            let mut train = Vec::new();
            let mut held = Vec::new();
            for o in &data.outputs {
                let r = fold_range(o.len(), folds, f);
                let keep: Vec<usize> = (0..o.len()).filter(|k| !r.contains(k)).collect();
                train.push(OutputSeries::new(
                    keep.iter().map(|&k| o.x[k]).collect(),
                    keep.iter().map(|&k| o.y[k]).collect(),
                ));
                held.push(OutputSeries::new(o.x[r.clone()].to_vec(), o.y[r].to_vec()));
            }
            Dataset::new(train).map(|t| (t, held))
        })
        .collect::<Result<_>>()?;

    let scores: Vec<(f64, f64)> = grid
        .iter()
        .map(|&lambda| {
            let pen = PenaltySpec { lambda, ..base.clone() };
            let score = cv_score(template, &splits, &pen, opts).unwrap_or(f64::INFINITY);
            (lambda, score)
        })
        .collect();

    let mut best = scores[0];
    for &(l, s) in &scores[1..] {
        if s < best.1 || (s == best.1 && l > best.0) {
            best = (l, s);
        }
    }
    Ok(CvSelection { lambda: best.0, scores })
}

fn cv_score(
    template: &MgpSpec,
    splits: &[(Dataset, Vec<OutputSeries>)],
    pen: &PenaltySpec,
    opts: &FitOptions,
) -> Result<f64> {
    let per_fold: Vec<Result<(f64, usize)>> = splits
        .par_iter()
        .map(|(train, held)| {
            let model = fit(template, train, pen, opts)?;
            let predictor = Predictor::new(&model)?;
            let mut sse = 0.0;
            let mut count = 0;
            for (i, o) in held.iter().enumerate() {
                for (&x, &y) in o.x.iter().zip(&o.y) {
                    sse += (predictor.predict(x, i)?.mean - y).powi(2);
                    count += 1;
                }
            }
            Ok((sse, count))
        })
        .collect();
    let mut sse = 0.0;
    let mut count = 0;
    for r in per_fold {
        let (s, c) = r?;
        sse += s;
        count += c;
    }
    Ok(sse / count as f64)
}
