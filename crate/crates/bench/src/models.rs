//! Model families compared by the experiments, behind one train/predict
//! interface.

use std::fmt;
use std::str::FromStr;

use mgp_core::infer::{fit, fit_pairwise_set, FitOptions, FittedModel};
use mgp_core::kernels::KernelSpec;
use mgp_core::objective::PenaltySpec;
use mgp_core::predict::{ExpertWeighting, ModelTarget, PairwiseEnsemble, PredictiveGaussian, TargetPredictor};
use mgp_core::structures::{make_arrowhead_spec, make_full_spec, Dataset, PairwiseVariant};
use mgp_core::MgpError;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Every latent feeds every output.
    FullQ {
        q: usize,
    },
    Arrowhead,
    PairwiseA,
    PairwiseB,
    /// One single-output GP per output.
    Independent,
    /// A full model with `q` latents on a subset of the outputs (target first).
    Subset {
        outputs: Vec<usize>,
        q: usize,
    },
}

impl ModelKind {
    pub fn label(&self) -> String {
        match self {
            Self::FullQ { q } => format!("mgp_{q}"),
            Self::Arrowhead => "arrowhead".into(),
            Self::PairwiseA => "pairwise_a".into(),
            Self::PairwiseB => "pairwise_b".into(),
            Self::Independent => "independent".into(),
            Self::Subset { .. } => "mgp_sub".into(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelKind {
    type Err = BenchError;

    /// Accepts `mgp_<q>`, `full_q(<q>)`, `arrowhead`, `pairwise_a`,
    /// `pairwise_b`, `independent` and `mgp_sub` (outputs resolved later).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "mgp_sub" {
            return Ok(Self::Subset {
                outputs: Vec::new(),
                q: 1,
            });
        }
        let q = s
            .strip_prefix("mgp_")
            .or_else(|| s.strip_prefix("full_q(").and_then(|r| r.strip_suffix(')')));
        if let Some(q) = q {
            let q: usize = q
                .parse()
                .map_err(|_| BenchError::Config(format!("bad latent count in `{s}`")))?;
            if q == 0 {
                return Err(BenchError::Config("full_q needs q >= 1".into()));
            }
            return Ok(Self::FullQ { q });
        }
        match s {
            "arrowhead" => Ok(Self::Arrowhead),
            "pairwise_a" => Ok(Self::PairwiseA),
            "pairwise_b" => Ok(Self::PairwiseB),
            "independent" | "gp" => Ok(Self::Independent),
            _ => Err(BenchError::Config(format!("unknown model `{s}`"))),
        }
    }
}

/// Settings shared by every model in one experiment.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub kernel: KernelSpec,
    /// Penalty used by arrowhead and pairwise models; other models fit the
    /// plain likelihood.
    pub penalty: PenaltySpec,
    pub fit: FitOptions,
    pub weighting: ExpertWeighting,
}

type BoxedTarget = Box<dyn TargetPredictor + Send + Sync>;

/// A trained model: the underlying fits plus a predictor for every output it
/// can predict.
pub struct TrainedModel {
    pub kind: ModelKind,
    pub fits: Vec<FittedModel>,
    /// Dataset outputs covered by each fit, in the fit's local order.
    pub covered: Vec<Vec<usize>>,
    /// Pairwise partners whose submodel failed, with the error.
    pub failed_pairs: Vec<(usize, String)>,
    predictors: Vec<Option<BoxedTarget>>,
}

impl fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedModel")
            .field("kind", &self.kind)
            .field("fits", &self.fits.len())
            .finish()
    }
}

impl TrainedModel {
    pub fn predicts(&self, output: usize) -> bool {
        self.predictors.get(output).is_some_and(Option::is_some)
    }

    pub fn predictor(&self, output: usize) -> Option<&(dyn TargetPredictor + Send + Sync)> {
        self.predictors.get(output).and_then(|p| p.as_deref())
    }

    pub fn predict(&self, output: usize, xs: &[f64]) -> Result<Vec<PredictiveGaussian>> {
        let p = self.predictor(output).ok_or(MgpError::InvalidTarget {
            target: output,
            n_outputs: self.predictors.len(),
        })?;
        Ok(xs
            .iter()
            .map(|&x| p.predict_target(x))
            .collect::<mgp_core::Result<_>>()?)
    }
}

fn boxed(model: &FittedModel, output: usize) -> Result<BoxedTarget> {
    Ok(Box::new(ModelTarget::new(model, output)?))
}

/// Fits `kind` to `data`. Target-centred models (arrowhead, pairwise, subset)
/// only predict `target`.
pub fn train(kind: &ModelKind, data: &Dataset, target: usize, settings: &TrainSettings) -> Result<TrainedModel> {
    let n = data.n_outputs();
    if target >= n {
        return Err(MgpError::InvalidTarget { target, n_outputs: n }.into());
    }
    let none = PenaltySpec::none();
    let mut predictors: Vec<Option<BoxedTarget>> = (0..n).map(|_| None).collect();
    let mut failed_pairs = Vec::new();
    let (fits, covered) = match kind {
        ModelKind::FullQ { q } => {
            let spec = make_full_spec(n, *q, &settings.kernel, 1.0)?;
            let m = fit(&spec, data, &none, &settings.fit)?;
            for (i, p) in predictors.iter_mut().enumerate() {
                *p = Some(boxed(&m, i)?);
            }
            (vec![m], vec![(0..n).collect()])
        }
        ModelKind::Arrowhead => {
            let spec = make_arrowhead_spec(n, target, &settings.kernel, 1.0)?;
            let m = fit(&spec, data, &settings.penalty, &settings.fit)?;
            predictors[target] = Some(boxed(&m, target)?);
            (vec![m], vec![(0..n).collect()])
        }
        ModelKind::PairwiseA | ModelKind::PairwiseB => {
            let variant = if *kind == ModelKind::PairwiseA {
                PairwiseVariant::TwoLatent
            } else {
                PairwiseVariant::SharedPrivate
            };
            let set = fit_pairwise_set(
                data,
                target,
                variant,
                &settings.kernel,
                &settings.penalty,
                &settings.fit,
            )?;
            let mut fits = Vec::new();
            let mut covered = Vec::new();
            for f in set {
                match f.result {
                    Ok(m) => {
                        fits.push(m);
                        covered.push(vec![target, f.partner]);
                    }
                    Err(e) => failed_pairs.push((f.partner, e.to_string())),
                }
            }
            let refs: Vec<&FittedModel> = fits.iter().collect();
            predictors[target] = Some(Box::new(PairwiseEnsemble::new(&refs, settings.weighting)?));
            (fits, covered)
        }
        ModelKind::Independent => {
            let spec = make_full_spec(1, 1, &settings.kernel, 1.0)?;
            let mut fits = Vec::with_capacity(n);
            for (i, p) in predictors.iter_mut().enumerate() {
                let m = fit(&spec, &data.subset(&[i])?, &none, &settings.fit)?;
                *p = Some(boxed(&m, 0)?);
                fits.push(m);
            }
            (fits, (0..n).map(|i| vec![i]).collect())
        }
        ModelKind::Subset { outputs, q } => {
            let pos = outputs.iter().position(|&o| o == target).ok_or_else(|| {
                BenchError::Config(format!("subset {outputs:?} does not contain the target {target}"))
            })?;
            let spec = make_full_spec(outputs.len(), *q, &settings.kernel, 1.0)?;
            let m = fit(&spec, &data.subset(outputs)?, &none, &settings.fit)?;
            predictors[target] = Some(boxed(&m, pos)?);
            (vec![m], vec![outputs.clone()])
        }
    };
    Ok(TrainedModel {
        kind: kind.clone(),
        fits,
        covered,
        failed_pairs,
        predictors,
    })
}
