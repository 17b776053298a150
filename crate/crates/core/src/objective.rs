//! Negative log marginal likelihood, shrinkage penalties, and the penalized
//! objective minimized during fitting.

use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};
use crate::kernels::cross_cov_grad;
use crate::numerics::{chol_logdet, chol_solve, cholesky_with_jitter, CholFactor, SymMatrix};
use crate::structures::{build_gram, Dataset, LatentTopology, MgpSpec};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    Ridge,
    L1,
    Bridge { exponent: f64 },
    Scad { gamma: f64 },
    GroupL2,
}

/// Multiplier applied to the penalty before it is added to the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyScale {
    /// Penalty added as is.
    #[default]
    Unit,
    /// Penalty multiplied by the number of observations `P`.
    DataSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    #[serde(default)]
    pub scale: PenaltyScale,
    /// Explicit parameter groups to penalize. `None` selects the cross
    /// amplitudes implied by the model topology (see [`penalty_targets`]).
    #[serde(default)]
    pub targets: Option<Vec<Vec<usize>>>,
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self::new(PenaltyKind::None, 0.0)
    }

    pub fn new(kind: PenaltyKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            scale: PenaltyScale::Unit,
            targets: None,
        }
    }

    pub fn with_scale(mut self, scale: PenaltyScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn is_active(&self) -> bool {
        !matches!(self.kind, PenaltyKind::None) && self.lambda > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(MgpError::InvalidPenaltyConfig(format!(
                "lambda {} must be finite and >= 0",
                self.lambda
            )));
        }
        match self.kind {
            PenaltyKind::Scad { gamma } if !(gamma > 2.0) => Err(MgpError::InvalidPenaltyConfig(format!(
                "SCAD gamma {gamma} must exceed 2"
            ))),
            PenaltyKind::Bridge { exponent } if !(exponent > 0.0 && exponent < 1.0) => Err(
                MgpError::InvalidPenaltyConfig(format!("bridge exponent {exponent} must lie in (0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

/// Penalized objective split into its parts; `total == nll + penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub nll: f64,
    pub penalty: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(nll: f64, penalty: f64) -> Self {
        Self {
            nll,
            penalty,
            total: nll + penalty,
        }
    }
}

/// Separable penalty `P_λ(|θ|)` for one coordinate and its derivative with
/// respect to `θ`.
fn scalar_penalty(kind: PenaltyKind, lambda: f64, theta: f64) -> (f64, f64) {
    let t = theta.abs();
    let sign = if theta > 0.0 {
        1.0
    } else if theta < 0.0 {
        -1.0
    } else {
        0.0
    };
    match kind {
        PenaltyKind::None | PenaltyKind::GroupL2 => (0.0, 0.0),
        PenaltyKind::Ridge => (lambda * theta * theta, 2.0 * lambda * theta),
        PenaltyKind::L1 => (lambda * t, lambda * sign),
        PenaltyKind::Bridge { exponent } => {
            if t == 0.0 {
                (0.0, 0.0)
            } else {
                (
                    lambda * t.powf(exponent),
                    lambda * exponent * t.powf(exponent - 1.0) * sign,
                )
            }
        }
        // The middle branch is the negated quadratic
        //   -(θ² - 2γλ|θ| + λ²) / (2γ - 2),
        // which joins λ|θ| at |θ| = λ and the constant λ²(γ + 1)/2 at
        // |θ| = γλ. Without the leading minus sign the function would jump
        // from λ² to -λ² at |θ| = λ and fail to be nondecreasing.
        PenaltyKind::Scad { gamma } => {
            if t <= lambda {
                (lambda * t, lambda * sign)
            } else if t <= gamma * lambda {
                (
                    -(t * t - 2.0 * gamma * lambda * t + lambda * lambda) / (2.0 * gamma - 2.0),
                    (gamma * lambda - t) / (gamma - 1.0) * sign,
                )
            } else {
                (lambda * lambda * (gamma + 1.0) / 2.0, 0.0)
            }
        }
    }
}

/// Penalty of one group of coordinates. Separable kinds sum over the group;
/// the group lasso returns `√|g| λ ‖g‖₂`.
fn group_penalty(kind: PenaltyKind, lambda: f64, group: &[f64], grad: Option<&mut [f64]>) -> f64 {
    match kind {
        PenaltyKind::GroupL2 => {
            let norm = group.iter().map(|v| v * v).sum::<f64>().sqrt();
            let weight = (group.len() as f64).sqrt() * lambda;
            if let Some(g) = grad {
                if norm > 0.0 {
                    for (gi, v) in g.iter_mut().zip(group) {
                        *gi = weight * v / norm;
                    }
                } else {
                    g.iter_mut().for_each(|gi| *gi = 0.0);
                }
            }
            weight * norm
        }
        _ => {
            let mut total = 0.0;
            match grad {
                Some(g) => {
                    for (gi, &v) in g.iter_mut().zip(group) {
                        let (p, d) = scalar_penalty(kind, lambda, v);
                        total += p;
                        *gi = d;
                    }
                }
                None => {
                    for &v in group {
                        total += scalar_penalty(kind, lambda, v).0;
                    }
                }
            }
            total
        }
    }
}

/// Penalty of a vector treated as a single group (before any data-size scaling).
pub fn penalty_value(pen: &PenaltySpec, theta0: &[f64]) -> Result<f64> {
    pen.validate()?;
    Ok(group_penalty(pen.kind, pen.lambda, theta0, None))
}

/// Parameter-vector indices of the amplitudes shrunk by a penalty on `spec`,
/// grouped as the group lasso sees them:
///
/// * arrowhead: one group per auxiliary latent, holding the amplitude of its
///   kernel into the target;
/// * two-latent pairwise: the two cross kernels into the other output's
///   latent, as a single group;
/// * shared/private pairwise: both amplitudes of the shared latent.
///
/// The full-Q model declares no penalized parameters.
pub fn penalty_targets(spec: &MgpSpec) -> Vec<Vec<usize>> {
    let slots = |q: usize, i: usize| -> Vec<usize> {
        match (spec.param_offset(q, i), spec.kernel(q, i)) {
            (Some(off), Some(k)) => k.amplitude_slots().into_iter().map(|s| off + s).collect(),
            _ => Vec::new(),
        }
    };
    match spec.topology {
        LatentTopology::FullQ { .. } => Vec::new(),
        LatentTopology::Arrowhead { target } => (1..spec.n_latents()).map(|q| slots(q, target)).collect(),
        LatentTopology::PairwiseTwoLatent { .. } => vec![[slots(0, 1), slots(1, 0)].concat()],
        LatentTopology::PairwiseSharedPrivate { .. } => vec![[slots(0, 0), slots(0, 1)].concat()],
    }
}

fn resolved_targets(spec: &MgpSpec, pen: &PenaltySpec) -> Result<Vec<Vec<usize>>> {
    let groups = match &pen.targets {
        Some(t) => t.clone(),
        None => penalty_targets(spec),
    };
    let n = spec.n_params();
    if let Some(bad) = groups.iter().flatten().find(|&&i| i >= n) {
        return Err(MgpError::InvalidPenaltyConfig(format!(
            "target index {bad} out of range"
        )));
    }
    if pen.is_active() && groups.iter().all(|g| g.is_empty()) {
        return Err(MgpError::InvalidPenaltyConfig(format!(
            "the {} topology has no penalized parameters",
            spec.topology.name()
        )));
    }
    Ok(groups)
}

fn scale_factor(pen: &PenaltySpec, data: &Dataset) -> f64 {
    match pen.scale {
        PenaltyScale::Unit => 1.0,
        PenaltyScale::DataSize => data.total_len() as f64,
    }
}

/// Penalty of `spec`'s current parameters, with its gradient accumulated into
/// `grad` when given.
fn spec_penalty(spec: &MgpSpec, data: &Dataset, pen: &PenaltySpec, grad: Option<&mut [f64]>) -> Result<f64> {
    pen.validate()?;
    if !pen.is_active() {
        return Ok(0.0);
    }
    let groups = resolved_targets(spec, pen)?;
    let params = spec.to_params();
    let scale = scale_factor(pen, data);
    let mut total = 0.0;
    let mut grad = grad;
    for group in &groups {
        let values: Vec<f64> = group.iter().map(|&i| params[i]).collect();
        match grad.as_deref_mut() {
            Some(g) => {
                let mut local = vec![0.0; group.len()];
                total += group_penalty(pen.kind, pen.lambda, &values, Some(&mut local));
                for (&i, d) in group.iter().zip(local) {
                    g[i] += scale * d;
                }
            }
            None => total += group_penalty(pen.kind, pen.lambda, &values, None),
        }
    }
    Ok(scale * total)
}

fn check_inputs(spec: &MgpSpec, data: &Dataset) -> Result<()> {
    spec.validate()?;
    data.validate()?;
    if spec.n_outputs != data.n_outputs() {
        return Err(MgpError::DimensionMismatch {
            expected: spec.n_outputs,
            found: data.n_outputs(),
        });
    }
    Ok(())
}

fn gaussian_nll(factor: &CholFactor, residual: &[f64]) -> Result<(f64, Vec<f64>)> {
    let alpha = chol_solve(factor, residual)?;
    let quad: f64 = residual.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let value = 0.5 * quad + 0.5 * chol_logdet(factor) + residual.len() as f64 * HALF_LN_2PI;
    if !value.is_finite() {
        return Err(MgpError::NonFiniteObjective);
    }
    Ok((value, alpha))
}

/// `½ yᵀ(C + Σ)⁻¹y + ½ log|C + Σ| + (P/2) log 2π`.
pub fn nll(spec: &MgpSpec, data: &Dataset) -> Result<f64> {
    check_inputs(spec, data)?;
    let gram = build_gram(spec, data)?;
    let factor = cholesky_with_jitter(&gram.matrix)?;
    Ok(gaussian_nll(&factor, &data.stacked_y())?.0)
}

/// Negative log likelihood and its gradient with respect to
/// [`MgpSpec::to_params`].
///
/// Uses `∂ℓ/∂θ = ½ tr((K⁻¹ - ααᵀ) ∂K/∂θ)` with `α = K⁻¹y`, accumulating
/// `∂K/∂θ` entry by entry so no per-parameter matrix is formed.
pub fn nll_with_grad(spec: &MgpSpec, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    check_inputs(spec, data)?;
    let gram = build_gram(spec, data)?;
    let factor = cholesky_with_jitter(&gram.matrix)?;
    let (value, alpha) = gaussian_nll(&factor, &data.stacked_y())?;

    let mut w = factor.inverse();
    let p = w.dim();
    for a in 0..p {
        for b in 0..=a {
            w.set(a, b, w.get(a, b) - alpha[a] * alpha[b]);
        }
    }

    let mut grad = vec![0.0; spec.n_params()];
    let offsets: Vec<Vec<Option<usize>>> = (0..spec.n_latents())
        .map(|q| (0..spec.n_outputs).map(|i| spec.param_offset(q, i)).collect())
        .collect();
    let max_np = spec
        .kernels
        .iter()
        .flatten()
        .flatten()
        .map(|k| k.n_params())
        .max()
        .unwrap_or(0);
    let (mut gi, mut gj) = (vec![0.0; max_np], vec![0.0; max_np]);

    for i in 0..spec.n_outputs {
        for j in 0..=i {
            let shared: Vec<usize> = spec.shared_latents(i, j).collect();
            if shared.is_empty() {
                continue;
            }
            for (r, a) in gram.blocks[i].clone().enumerate() {
                let xa = data.outputs[i].x[r];
                for (c, b) in gram.blocks[j].clone().enumerate() {
                    if i == j && b > a {
                        break;
                    }
                    let xb = data.outputs[j].x[c];
                    let weight = if a == b { 0.5 } else { 1.0 } * w.get(a, b);
                    if weight == 0.0 {
                        continue;
                    }
                    for &q in &shared {
                        let (ki, kj) = (spec.kernel(q, i).unwrap(), spec.kernel(q, j).unwrap());
                        let (ni, nj) = (ki.n_params(), kj.n_params());
                        cross_cov_grad(ki, kj, xa - xb, &mut gi[..ni], &mut gj[..nj])?;
                        let (oi, oj) = (offsets[q][i].unwrap(), offsets[q][j].unwrap());
                        for k in 0..ni {
                            grad[oi + k] += weight * gi[k];
                        }
                        for k in 0..nj {
                            grad[oj + k] += weight * gj[k];
                        }
                    }
                }
            }
        }
    }
    let noise_offset = spec.n_kernel_params();
    for i in 0..spec.n_outputs {
        let trace: f64 = gram.blocks[i].clone().map(|a| w.get(a, a)).sum();
        grad[noise_offset + i] = 0.5 * spec.noise[i] * trace;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(MgpError::NonFiniteObjective);
    }
    Ok((value, grad))
}

fn block_matrix(spec: &MgpSpec, data: &Dataset, i: usize) -> Result<SymMatrix> {
    let x = &data.outputs[i].x;
    let block = spec.cov_block(i, i, x, x)?;
    let n = x.len();
    Ok(SymMatrix::from_fn(n, |a, b| {
        block[a * n + b] + if a == b { spec.noise[i] } else { 0.0 }
    }))
}

/// Negative log likelihood of an arrowhead model evaluated through its
/// factorization: independent terms for every auxiliary output plus the
/// conditional term of the target given the rest. Only per-output blocks are
/// ever factorized, so the cost is `O(N p³)` and no `P x P` matrix exists.
pub fn nll_arrowhead_factorized(spec: &MgpSpec, data: &Dataset) -> Result<f64> {
    let LatentTopology::Arrowhead { target } = spec.topology else {
        return Err(MgpError::WrongTopology { expected: "arrowhead" });
    };
    check_inputs(spec, data)?;
    let xt = &data.outputs[target].x;
    let pt = xt.len();
    let mut cond_mean = vec![0.0; pt];
    let mut cond_cov = block_matrix(spec, data, target)?;
    let mut total = 0.0;

    for i in (0..spec.n_outputs).filter(|&i| i != target) {
        let factor = cholesky_with_jitter(&block_matrix(spec, data, i)?)?;
        let (term, alpha) = gaussian_nll(&factor, &data.outputs[i].y)?;
        total += term;

        let pi = data.outputs[i].len();
        let cross = spec.cov_block(target, i, xt, &data.outputs[i].x)?;
        for (a, m) in cond_mean.iter_mut().enumerate() {
            *m += cross[a * pi..(a + 1) * pi]
                .iter()
                .zip(&alpha)
                .map(|(c, al)| c * al)
                .sum::<f64>();
        }
        // V = L_i⁻¹ C_{i,target}, one column per target input.
        let columns: Vec<Vec<f64>> = (0..pt)
            .map(|a| {
                let mut v = cross[a * pi..(a + 1) * pi].to_vec();
                factor.solve_lower_in_place(&mut v);
                v
            })
            .collect();
        for a in 0..pt {
            for b in 0..=a {
                let vv: f64 = columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum();
                cond_cov.set(a, b, cond_cov.get(a, b) - vv);
            }
        }
    }

    let residual: Vec<f64> = data.outputs[target]
        .y
        .iter()
        .zip(&cond_mean)
        .map(|(y, m)| y - m)
        .collect();
    let factor = cholesky_with_jitter(&cond_cov)?;
    total += gaussian_nll(&factor, &residual)?.0;
    Ok(total)
}

/// Penalized objective `ℓ(θ) + s · P_λ(θ₀)` where `θ₀` are the topology's
/// cross amplitudes and `s` is 1 or `P` depending on [`PenaltyScale`].
pub fn penalized_nll(spec: &MgpSpec, data: &Dataset, pen: &PenaltySpec) -> Result<ObjectiveValue> {
    let value = nll(spec, data)?;
    let penalty = spec_penalty(spec, data, pen, None)?;
    Ok(ObjectiveValue::new(value, penalty))
}

/// [`penalized_nll`] together with its gradient.
pub fn penalized_nll_with_grad(
    spec: &MgpSpec,
    data: &Dataset,
    pen: &PenaltySpec,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    let (value, mut grad) = nll_with_grad(spec, data)?;
    let penalty = spec_penalty(spec, data, pen, Some(&mut grad))?;
    Ok((ObjectiveValue::new(value, penalty), grad))
}
