//! Predictive distributions, product-of-experts fusion of pairwise
//! submodels, the information-transfer metric, and related-output selection.

use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};
use crate::infer::FittedModel;
use crate::numerics::{chol_solve, cholesky_with_jitter, CholFactor};
use crate::structures::{build_gram, Dataset, LatentTopology, MgpSpec, OutputSeries};

/// Gaussian predictive distribution of a noisy observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveGaussian {
    pub mean: f64,
    /// Includes the output's noise variance.
    pub variance: f64,
}

/// A factorized training Gram matrix, ready to answer many queries.
#[derive(Debug, Clone)]
pub struct Predictor {
    spec: MgpSpec,
    data: Dataset,
    factor: CholFactor,
    alpha: Vec<f64>,
}

impl Predictor {
    pub fn new(model: &FittedModel) -> Result<Self> {
        Self::from_spec(&model.spec, &model.data)
    }

    pub fn from_spec(spec: &MgpSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        data.validate()?;
        let gram = build_gram(spec, data)?;
        let factor = cholesky_with_jitter(&gram.matrix)?;
        let alpha = chol_solve(&factor, &data.stacked_y())?;
        Ok(Self {
            spec: spec.clone(),
            data: data.clone(),
            factor,
            alpha,
        })
    }

    pub fn spec(&self) -> &MgpSpec {
        &self.spec
    }

    /// Predictive distribution of output `i` at `x0`:
    /// mean `cᵀ(C + Σ)⁻¹y`, variance `cov_ii(x0, x0) + σ_i² - cᵀ(C + Σ)⁻¹c`.
    pub fn predict(&self, x0: f64, i: usize) -> Result<PredictiveGaussian> {
        if i >= self.spec.n_outputs {
            return Err(MgpError::InvalidTarget {
                target: i,
                n_outputs: self.spec.n_outputs,
            });
        }
        let mut c = Vec::with_capacity(self.data.total_len());
        for (j, o) in self.data.outputs.iter().enumerate() {
            let block = self.spec.cov_block(i, j, &[x0], &o.x)?;
            c.extend(block);
        }
        let mean: f64 = c.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.factor.solve_lower_in_place(&mut c);
        let explained: f64 = c.iter().map(|v| v * v).sum();
        let prior = self.spec.cross_cov_fn(i, i, x0, x0)? + self.spec.noise[i];
        let variance = (prior - explained).max(prior * f64::EPSILON);
        Ok(PredictiveGaussian { mean, variance })
    }

    pub fn predict_many(&self, xs: &[f64], i: usize) -> Result<Vec<PredictiveGaussian>> {
        xs.iter().map(|&x| self.predict(x, i)).collect()
    }

    /// Prior variance of a noisy observation of output `i` at `x0`.
    pub fn prior_variance(&self, x0: f64, i: usize) -> Result<f64> {
        Ok(self.spec.cross_cov_fn(i, i, x0, x0)? + self.spec.noise[i])
    }
}

/// Predictive distribution of output `i` of a fitted model at `x0`.
pub fn predict(model: &FittedModel, x0: f64, i: usize) -> Result<PredictiveGaussian> {
    Predictor::new(model)?.predict(x0, i)
}

/// Precision-weighted fusion of Gaussian experts: precision `Σ β_k / σ_k²`,
/// mean `(Σ β_k μ_k / σ_k²) / precision`.
pub fn poe_combine(preds: &[PredictiveGaussian], weights: &[f64]) -> Result<PredictiveGaussian> {
    if preds.is_empty() {
        return Err(MgpError::EmptyExpertSet);
    }
    if weights.len() != preds.len() {
        return Err(MgpError::DimensionMismatch {
            expected: preds.len(),
            found: weights.len(),
        });
    }
    if let Some(p) = preds.iter().find(|p| !(p.variance > 0.0) || !p.mean.is_finite()) {
        return Err(MgpError::InvalidData(format!(
            "expert variance {} must be positive",
            p.variance
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(MgpError::DegenerateWeights(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(MgpError::DegenerateWeights("all weights are zero".into()));
    }
    let precision: f64 = preds.iter().zip(weights).map(|(p, w)| w / p.variance).sum();
    let weighted: f64 = preds.iter().zip(weights).map(|(p, w)| w * p.mean / p.variance).sum();
    Ok(PredictiveGaussian {
        mean: weighted / precision,
        variance: 1.0 / precision,
    })
}

/// How the experts of a pairwise ensemble are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertWeighting {
    /// `β_k = 1 / K` for `K` experts.
    #[default]
    Uniform,
    /// `β_k = ½ (log prior variance - log posterior variance)`.
    Entropy,
}

/// Anything that yields a predictive distribution for one target output.
pub trait TargetPredictor {
    fn predict_target(&self, x0: f64) -> Result<PredictiveGaussian>;
}

/// One output of a single model.
#[derive(Debug, Clone)]
pub struct ModelTarget {
    pub predictor: Predictor,
    pub output: usize,
}

impl ModelTarget {
    pub fn new(model: &FittedModel, output: usize) -> Result<Self> {
        Ok(Self {
            predictor: Predictor::new(model)?,
            output,
        })
    }
}

impl TargetPredictor for ModelTarget {
    fn predict_target(&self, x0: f64) -> Result<PredictiveGaussian> {
        self.predictor.predict(x0, self.output)
    }
}

/// Bivariate submodels sharing a target (their local output 0), fused by a
/// product of experts.
#[derive(Debug, Clone)]
pub struct PairwiseEnsemble {
    pub experts: Vec<Predictor>,
    pub weighting: ExpertWeighting,
}

impl PairwiseEnsemble {
    pub fn new(models: &[&FittedModel], weighting: ExpertWeighting) -> Result<Self> {
        if models.is_empty() {
            return Err(MgpError::EmptyExpertSet);
        }
        let experts = models.iter().map(|m| Predictor::new(m)).collect::<Result<_>>()?;
        Ok(Self { experts, weighting })
    }
}

impl TargetPredictor for PairwiseEnsemble {
    fn predict_target(&self, x0: f64) -> Result<PredictiveGaussian> {
        let preds = self
            .experts
            .iter()
            .map(|e| e.predict(x0, 0))
            .collect::<Result<Vec<_>>>()?;
        let weights = match self.weighting {
            ExpertWeighting::Uniform => vec![1.0 / preds.len() as f64; preds.len()],
            ExpertWeighting::Entropy => self
                .experts
                .iter()
                .zip(&preds)
                .map(|(e, p)| Ok((0.5 * (e.prior_variance(x0, 0)?.ln() - p.variance.ln())).max(0.0)))
                .collect::<Result<_>>()?,
        };
        poe_combine(&preds, &weights)
    }
}

/// Empirical version of the information-transfer metric for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ITReport {
    pub target: usize,
    /// Outputs modeled by the subset model.
    pub partition: Vec<usize>,
    pub risk_full: f64,
    pub risk_subset: f64,
    /// `risk_full - risk_subset`; positive values flag negative transfer.
    pub it_value: f64,
}

/// Mean squared error of a predictor's means against held-out values.
pub fn empirical_risk(model: &dyn TargetPredictor, test: &OutputSeries) -> Result<f64> {
    if test.is_empty() {
        return Err(MgpError::EmptyTestSet);
    }
    let mut sse = 0.0;
    for (&x, &y) in test.x.iter().zip(&test.y) {
        sse += (model.predict_target(x)?.mean - y).powi(2);
    }
    Ok(sse / test.len() as f64)
}

/// Risk of the model trained on all outputs minus the risk of the model
/// trained on the subset `partition`, both for output `target`.
pub fn information_transfer(
    full: &dyn TargetPredictor,
    subset: &dyn TargetPredictor,
    test: &OutputSeries,
    target: usize,
    partition: Vec<usize>,
) -> Result<ITReport> {
    let risk_full = empirical_risk(full, test)?;
    let risk_subset = empirical_risk(subset, test)?;
    Ok(ITReport {
        target,
        partition,
        risk_full,
        risk_subset,
        it_value: risk_full - risk_subset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    /// Partner output in the original dataset.
    pub partner: usize,
    pub score: f64,
    pub related: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub related: Vec<usize>,
    pub scores: Vec<PairScore>,
}

fn amplitude_norm(spec: &MgpSpec, q: usize, i: usize) -> f64 {
    spec.kernel(q, i)
        .map_or(0.0, |k| k.amplitudes().iter().map(|a| a * a).sum::<f64>().sqrt())
}

/// Scale-free strength of the coupling in a fitted bivariate model.
///
/// Shared/private: `|α₀₁ α₀ᵢ| / √(auto₁(0) auto_i(0))`. Two-latent: the
/// Euclidean norm of the two cross amplitudes over `(auto₁(0) auto_i(0))^¼`.
/// Here `auto_j(0)` is the signal variance of local output `j`.
pub fn pair_score(spec: &MgpSpec) -> Result<f64> {
    let auto0 = spec.cross_cov_fn(0, 0, 0.0, 0.0)?;
    let auto1 = spec.cross_cov_fn(1, 1, 0.0, 0.0)?;
    let scale = (auto0 * auto1).sqrt();
    let raw = match spec.topology {
        LatentTopology::PairwiseSharedPrivate { .. } => {
            return Ok(if scale > 0.0 {
                amplitude_norm(spec, 0, 0) * amplitude_norm(spec, 0, 1) / scale
            } else {
                0.0
            });
        }
        LatentTopology::PairwiseTwoLatent { .. } => amplitude_norm(spec, 0, 1).hypot(amplitude_norm(spec, 1, 0)),
        _ => return Err(MgpError::WrongTopology { expected: "pairwise" }),
    };
    Ok(if scale > 0.0 { raw / scale.sqrt() } else { 0.0 })
}

/// Flags the partners whose pair score exceeds `tau`.
pub fn select_related(fits: &[&FittedModel], tau: f64) -> Result<Selection> {
    let mut scores = Vec::with_capacity(fits.len());
    for m in fits {
        let partner = match m.spec.topology {
            LatentTopology::PairwiseSharedPrivate { second, .. } | LatentTopology::PairwiseTwoLatent { second, .. } => {
                second
            }
            _ => return Err(MgpError::WrongTopology { expected: "pairwise" }),
        };
        let score = pair_score(&m.spec)?;
        scores.push(PairScore {
            partner,
            score,
            related: score > tau,
        });
    }
    let related = scores.iter().filter(|s| s.related).map(|s| s.partner).collect();
    Ok(Selection { related, scores })
}
