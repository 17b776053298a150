//! Latent topologies, model specifications, datasets and Gram assembly.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};
use crate::kernels::{cross_cov, KernelFamily, KernelSpec, SeKernel, SpectralKernel};
use crate::numerics::SymMatrix;

/// How latent processes connect to outputs.
///
/// Pairwise variants always describe a bivariate model whose local output 0
/// is the target `first` and local output 1 is the partner `second`; the
/// stored indices refer to the outputs of the original dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentTopology {
    /// `q_count` latents, each free to feed every output.
    FullQ { q_count: usize },
    /// Latent 0 feeds only the target; latent `k ≥ 1` feeds the `k`-th
    /// auxiliary output and the target.
    Arrowhead { target: usize },
    /// Latent 0 is shared by both outputs, latents 1 and 2 are private to the
    /// target and the partner respectively.
    PairwiseSharedPrivate { first: usize, second: usize },
    /// Two latents, each feeding both outputs.
    PairwiseTwoLatent { first: usize, second: usize },
}

impl LatentTopology {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FullQ { .. } => "full_q",
            Self::Arrowhead { .. } => "arrowhead",
            Self::PairwiseSharedPrivate { .. } => "pairwise_shared_private",
            Self::PairwiseTwoLatent { .. } => "pairwise_two_latent",
        }
    }

    pub fn is_pairwise(&self) -> bool {
        matches!(
            self,
            Self::PairwiseSharedPrivate { .. } | Self::PairwiseTwoLatent { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseVariant {
    /// Two latents feeding both outputs.
    TwoLatent,
    /// One shared latent plus one private latent per output.
    SharedPrivate,
}

/// A complete model: topology, kernels for every active (latent, output)
/// pair, and per-output noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgpSpec {
    pub n_outputs: usize,
    pub topology: LatentTopology,
    /// `kernels[q][i]` is the smoothing kernel from latent `q` to output `i`,
    /// or `None` when the pair is inactive.
    pub kernels: Vec<Vec<Option<KernelSpec>>>,
    /// Noise variances `σ_i²`.
    pub noise: Vec<f64>,
}

impl MgpSpec {
    pub fn n_latents(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernel(&self, q: usize, i: usize) -> Option<&KernelSpec> {
        self.kernels.get(q)?.get(i)?.as_ref()
    }

    pub fn kernel_mut(&mut self, q: usize, i: usize) -> Option<&mut KernelSpec> {
        self.kernels.get_mut(q)?.get_mut(i)?.as_mut()
    }

    /// Latents active for both outputs.
    pub fn shared_latents(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_latents()).filter(move |&q| self.kernels[q][i].is_some() && self.kernels[q][j].is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_outputs;
        if n == 0 {
            return Err(MgpError::InvalidSpec("model has no outputs".into()));
        }
        if self.noise.len() != n {
            return Err(MgpError::InvalidSpec(format!(
                "{} noise variances for {n} outputs",
                self.noise.len()
            )));
        }
        if let Some(v) = self.noise.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(MgpError::InvalidSpec(format!("noise variance {v} is not positive")));
        }
        if self.kernels.is_empty() || self.kernels.iter().any(|row| row.len() != n) {
            return Err(MgpError::InvalidSpec("kernel table does not match output count".into()));
        }
        for row in &self.kernels {
            let mut family = None;
            for k in row.iter().flatten() {
                k.validate()?;
                match family {
                    None => family = Some(k.family()),
                    Some(f) if f != k.family() => return Err(MgpError::UnsupportedPair),
                    _ => {}
                }
            }
        }
        for i in 0..n {
            if (0..self.n_latents()).all(|q| self.kernels[q][i].is_none()) {
                return Err(MgpError::InvalidSpec(format!("output {i} has no latent connection")));
            }
        }
        let active = |q: usize, i: usize| self.kernels[q][i].is_some();
        match self.topology {
            LatentTopology::FullQ { q_count } => {
                if q_count == 0 || q_count != self.n_latents() {
                    return Err(MgpError::InvalidSpec(format!(
                        "full-Q topology declares {q_count} latents, table has {}",
                        self.n_latents()
                    )));
                }
            }
            LatentTopology::Arrowhead { target } => {
                if target >= n {
                    return Err(MgpError::InvalidTarget { target, n_outputs: n });
                }
                if self.n_latents() != n {
                    return Err(MgpError::InvalidSpec("arrowhead needs one latent per output".into()));
                }
                let aux: Vec<usize> = (0..n).filter(|&i| i != target).collect();
                let ok_private = (0..n).all(|i| active(0, i) == (i == target));
                let ok_aux = aux
                    .iter()
                    .enumerate()
                    .all(|(k, &out)| (0..n).all(|i| active(k + 1, i) == (i == out || i == target)));
                if !ok_private || !ok_aux {
                    return Err(MgpError::InvalidSpec("kernel table is not an arrowhead pattern".into()));
                }
            }
            LatentTopology::PairwiseSharedPrivate { .. } => {
                let pattern = [[true, true], [true, false], [false, true]];
                if n != 2 || self.n_latents() != 3 || !check_pattern(self, &pattern) {
                    return Err(MgpError::InvalidSpec("not a shared/private pairwise pattern".into()));
                }
            }
            LatentTopology::PairwiseTwoLatent { .. } => {
                let pattern = [[true, true], [true, true]];
                if n != 2 || self.n_latents() != 2 || !check_pattern(self, &pattern) {
                    return Err(MgpError::InvalidSpec("not a two-latent pairwise pattern".into()));
                }
            }
        }
        Ok(())
    }

    /// Total number of free parameters: kernel parameters plus one noise term
    /// per output.
    pub fn n_params(&self) -> usize {
        self.n_kernel_params() + self.n_outputs
    }

    pub fn n_kernel_params(&self) -> usize {
        self.kernels.iter().flatten().flatten().map(KernelSpec::n_params).sum()
    }

    pub fn n_kernels(&self) -> usize {
        self.kernels.iter().flatten().flatten().count()
    }

    /// Offset of kernel `(q, i)` inside the flat parameter vector.
    pub fn param_offset(&self, q: usize, i: usize) -> Option<usize> {
        let mut offset = 0;
        for (qq, row) in self.kernels.iter().enumerate() {
            for (ii, k) in row.iter().enumerate() {
                if let Some(k) = k {
                    if (qq, ii) == (q, i) {
                        return Some(offset);
                    }
                    offset += k.n_params();
                }
            }
        }
        None
    }

    /// Flat parameter vector: kernel parameters in `(q, i)` order, then
    /// `log σ_i²` for every output.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .kernels
            .iter()
            .flatten()
            .flatten()
            .flat_map(KernelSpec::params)
            .collect();
        p.extend(self.noise.iter().map(|v| v.ln()));
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(MgpError::DimensionMismatch {
                expected: self.n_params(),
                found: p.len(),
            });
        }
        let mut offset = 0;
        for k in self.kernels.iter_mut().flatten().flatten() {
            let m = k.n_params();
            k.set_params(&p[offset..offset + m]);
            offset += m;
        }
        for (v, lp) in self.noise.iter_mut().zip(&p[offset..]) {
            *v = lp.exp();
        }
        Ok(())
    }

    /// Returns a copy carrying the parameters `p`.
    pub fn with_params(&self, p: &[f64]) -> Result<Self> {
        let mut s = self.clone();
        s.set_params(p)?;
        Ok(s)
    }

    /// `cov^f_ij(x, x')`: the sum over latents shared by outputs `i` and `j`
    /// of the kernels' correlation integral at lag `x - x'`.
    pub fn cross_cov_fn(&self, i: usize, j: usize, x: f64, xp: f64) -> Result<f64> {
        if i >= self.n_outputs || j >= self.n_outputs {
            return Err(MgpError::InvalidTarget {
                target: i.max(j),
                n_outputs: self.n_outputs,
            });
        }
        let d = x - xp;
        let mut total = 0.0;
        for q in 0..self.n_latents() {
            if let (Some(ki), Some(kj)) = (&self.kernels[q][i], &self.kernels[q][j]) {
                total += cross_cov(ki, kj, d)?;
            }
        }
        Ok(total)
    }

    /// Dense `|xa| x |xb|` block of `cov^f_ij`, row-major.
    pub fn cov_block(&self, i: usize, j: usize, xa: &[f64], xb: &[f64]) -> Result<Vec<f64>> {
        let pairs: Vec<(&KernelSpec, &KernelSpec)> = self
            .shared_latents(i, j)
            .map(|q| (self.kernel(q, i).unwrap(), self.kernel(q, j).unwrap()))
            .collect();
        let mut out = vec![0.0; xa.len() * xb.len()];
        if pairs.is_empty() {
            return Ok(out);
        }
        for (r, &x) in xa.iter().enumerate() {
            for (c, &xp) in xb.iter().enumerate() {
                let mut v = 0.0;
                for (ki, kj) in &pairs {
                    v += cross_cov(ki, kj, x - xp)?;
                }
                out[r * xb.len() + c] = v;
            }
        }
        Ok(out)
    }

    /// Reorders outputs: output `perm[k]` of `self` becomes output `k`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_outputs {
            return Err(MgpError::DimensionMismatch {
                expected: self.n_outputs,
                found: perm.len(),
            });
        }
        let topology = match self.topology {
            LatentTopology::FullQ { .. } => self.topology,
            LatentTopology::Arrowhead { .. } => LatentTopology::FullQ {
                q_count: self.n_latents(),
            },
            _ => {
                return Err(MgpError::WrongTopology {
                    expected: "full_q or arrowhead",
                })
            }
        };
        Ok(Self {
            n_outputs: self.n_outputs,
            topology,
            kernels: self
                .kernels
                .iter()
                .map(|row| perm.iter().map(|&p| row[p].clone()).collect())
                .collect(),
            noise: perm.iter().map(|&p| self.noise[p]).collect(),
        })
    }
}

fn check_pattern<const Q: usize>(spec: &MgpSpec, pattern: &[[bool; 2]; Q]) -> bool {
    pattern
        .iter()
        .enumerate()
        .all(|(q, row)| row.iter().enumerate().all(|(i, &a)| spec.kernels[q][i].is_some() == a))
}

/// Observations of one output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl OutputSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Per-output inputs and observations, possibly of unequal sizes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub outputs: Vec<OutputSeries>,
}

impl Dataset {
    pub fn new(outputs: Vec<OutputSeries>) -> Result<Self> {
        let d = Self { outputs };
        d.validate()?;
        Ok(d)
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Total number of observations `P`.
    pub fn total_len(&self) -> usize {
        self.outputs.iter().map(OutputSeries::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(MgpError::InvalidData("dataset has no outputs".into()));
        }
        for (i, o) in self.outputs.iter().enumerate() {
            if o.x.len() != o.y.len() {
                return Err(MgpError::InvalidData(format!(
                    "output {i}: {} inputs but {} observations",
                    o.x.len(),
                    o.y.len()
                )));
            }
            if o.is_empty() {
                return Err(MgpError::InvalidData(format!("output {i} has no observations")));
            }
            if o.x.iter().chain(&o.y).any(|v| !v.is_finite()) {
                return Err(MgpError::InvalidData(format!("output {i} has non-finite values")));
            }
        }
        Ok(())
    }

    /// Index ranges of each output's block inside the stacked vector.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.outputs
            .iter()
            .map(|o| {
                let r = start..start + o.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Stacked observations `y = [y_1; ...; y_N]`.
    pub fn stacked_y(&self) -> Vec<f64> {
        self.outputs.iter().flat_map(|o| o.y.iter().copied()).collect()
    }

    /// Dataset restricted to the given outputs, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let outputs = indices
            .iter()
            .map(|&i| {
                self.outputs.get(i).cloned().ok_or(MgpError::InvalidTarget {
                    target: i,
                    n_outputs: self.n_outputs(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { outputs })
    }
}

/// `C_ff + Σ` together with the block layout of its rows.
#[derive(Debug, Clone)]
pub struct Gram {
    pub matrix: SymMatrix,
    pub blocks: Vec<Range<usize>>,
}

impl Gram {
    pub fn block(&self, i: usize, j: usize) -> Vec<f64> {
        let (ri, rj) = (&self.blocks[i], &self.blocks[j]);
        ri.clone()
            .flat_map(|a| rj.clone().map(move |b| (a, b)))
            .map(|(a, b)| self.matrix.get(a, b))
            .collect()
    }
}

fn check_compatible(spec: &MgpSpec, data: &Dataset) -> Result<()> {
    if spec.n_outputs != data.n_outputs() {
        return Err(MgpError::DimensionMismatch {
            expected: spec.n_outputs,
            found: data.n_outputs(),
        });
    }
    Ok(())
}

/// Assembles the `P x P` matrix `C_ff + Σ`: block `(i, j)` holds `cov^f_ij`
/// over the two outputs' inputs and diagonal blocks add `σ_i² I`.
pub fn build_gram(spec: &MgpSpec, data: &Dataset) -> Result<Gram> {
    check_compatible(spec, data)?;
    let blocks = data.blocks();
    let mut matrix = SymMatrix::zeros(data.total_len());
    for i in 0..spec.n_outputs {
        for j in 0..=i {
            let block = spec.cov_block(i, j, &data.outputs[i].x, &data.outputs[j].x)?;
            let cols = data.outputs[j].len();
            for (r, a) in blocks[i].clone().enumerate() {
                for (c, b) in blocks[j].clone().enumerate() {
                    if i == j && b > a {
                        continue;
                    }
                    matrix.set(a, b, block[r * cols + c]);
                }
            }
        }
        for a in blocks[i].clone() {
            matrix.set(a, a, matrix.get(a, a) + spec.noise[i]);
        }
    }
    Ok(Gram { matrix, blocks })
}

fn prototype_for(family: KernelFamily, proto: &KernelSpec) -> Result<KernelSpec> {
    if proto.family() != family {
        return Err(MgpError::UnsupportedPair);
    }
    Ok(match proto {
        KernelSpec::Se(k) => KernelSpec::Se(SeKernel {
            free_shift: false,
            shift: 0.0,
            ..*k
        }),
        KernelSpec::Spectral(k) => KernelSpec::Spectral(SpectralKernel {
            components: k.components.clone(),
        }),
    })
}

/// Classical convolution-process model: `q` latents, each feeding all outputs.
pub fn make_full_spec(n_outputs: usize, q: usize, proto: &KernelSpec, noise: f64) -> Result<MgpSpec> {
    if n_outputs == 0 || q == 0 {
        return Err(MgpError::InvalidSpec("need at least one output and one latent".into()));
    }
    let k = prototype_for(proto.family(), proto)?;
    let spec = MgpSpec {
        n_outputs,
        topology: LatentTopology::FullQ { q_count: q },
        kernels: vec![vec![Some(k); n_outputs]; q],
        noise: vec![noise; n_outputs],
    };
    spec.validate()?;
    Ok(spec)
}

/// Arrowhead model around `target`: `2N - 1` kernels and `N` noises.
pub fn make_arrowhead_spec(n_outputs: usize, target: usize, proto: &KernelSpec, noise: f64) -> Result<MgpSpec> {
    if n_outputs < 2 {
        return Err(MgpError::InvalidSpec("arrowhead needs at least two outputs".into()));
    }
    if target >= n_outputs {
        return Err(MgpError::InvalidTarget { target, n_outputs });
    }
    let k = prototype_for(proto.family(), proto)?;
    let mut kernels = vec![vec![None; n_outputs]; n_outputs];
    kernels[0][target] = Some(k.clone());
    for (latent, aux) in (0..n_outputs).filter(|&i| i != target).enumerate() {
        kernels[latent + 1][aux] = Some(k.clone());
        kernels[latent + 1][target] = Some(k.clone());
    }
    let spec = MgpSpec {
        n_outputs,
        topology: LatentTopology::Arrowhead { target },
        kernels,
        noise: vec![noise; n_outputs],
    };
    spec.validate()?;
    Ok(spec)
}

/// Bivariate model between `first` (the target, local output 0) and `second`.
///
/// For the shared/private variant an SE prototype with `free_shift` set
/// makes the partner's shared kernel carry a free relative input shift.
pub fn make_pairwise_spec(
    variant: PairwiseVariant,
    first: usize,
    second: usize,
    proto: &KernelSpec,
    noise: f64,
) -> Result<MgpSpec> {
    if first == second {
        return Err(MgpError::InvalidTarget {
            target: second,
            n_outputs: 2,
        });
    }
    let k = prototype_for(proto.family(), proto)?;
    let (topology, kernels) = match variant {
        PairwiseVariant::TwoLatent => (
            LatentTopology::PairwiseTwoLatent { first, second },
            vec![vec![Some(k.clone()), Some(k.clone())]; 2],
        ),
        PairwiseVariant::SharedPrivate => {
            let mut partner_shared = k.clone();
            if let (KernelSpec::Se(p), KernelSpec::Se(s)) = (proto, &mut partner_shared) {
                if p.free_shift {
                    s.free_shift = true;
                    s.shift = p.shift;
                }
            }
            (
                LatentTopology::PairwiseSharedPrivate { first, second },
                vec![
                    vec![Some(k.clone()), Some(partner_shared)],
                    vec![Some(k.clone()), None],
                    vec![None, Some(k)],
                ],
            )
        }
    };
    let spec = MgpSpec {
        n_outputs: 2,
        topology,
        kernels,
        noise: vec![noise; 2],
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{se_auto_cov, SeKernel};

    fn series(x: &[f64]) -> OutputSeries {
        OutputSeries::new(x.to_vec(), x.iter().map(|v| v.sin()).collect())
    }

    #[test]
    fn arrowhead_parameter_count() {
        let spec = make_arrowhead_spec(3, 0, &KernelSpec::se(1.0, 1.0), 0.1).unwrap();
        assert_eq!(spec.n_kernels(), 5);
        assert_eq!(spec.n_kernel_params(), 10);
        assert_eq!(spec.noise.len(), 3);
        assert_eq!(spec.n_params(), (2 * 3 - 1) * 2 + 3);
    }

    #[test]
    fn pairwise_two_latent_parameter_count() {
        let spec = make_pairwise_spec(PairwiseVariant::TwoLatent, 0, 4, &KernelSpec::se(1.0, 1.0), 0.1).unwrap();
        assert_eq!(spec.n_kernels(), 4);
        assert_eq!(spec.n_kernel_params(), 8);
        assert_eq!(spec.n_params(), 4 * 2 + 2);
    }

    #[test]
    fn pairwise_shared_private_layout() {
        let proto = KernelSpec::Se(SeKernel::new(1.0, 1.0).with_shift(0.0, true));
        let spec = make_pairwise_spec(PairwiseVariant::SharedPrivate, 0, 2, &proto, 0.1).unwrap();
        assert_eq!(spec.n_latents(), 3);
        assert_eq!(spec.n_kernels(), 4);
        // shared kernels (α01, ℓ01) and (α0i, ℓ0i, μ) plus two private kernels
        assert_eq!(spec.n_kernel_params(), 2 + 3 + 2 + 2);
        assert_eq!(spec.shared_latents(0, 1).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn invalid_targets_rejected() {
        let k = KernelSpec::se(1.0, 1.0);
        assert!(matches!(
            make_arrowhead_spec(3, 3, &k, 0.1),
            Err(MgpError::InvalidTarget { .. })
        ));
        assert!(make_arrowhead_spec(1, 0, &k, 0.1).is_err());
        assert!(make_pairwise_spec(PairwiseVariant::TwoLatent, 1, 1, &k, 0.1).is_err());
    }

    #[test]
    fn arrowhead_non_target_blocks_vanish() {
        let spec = make_arrowhead_spec(3, 0, &KernelSpec::se(1.3, 0.8), 0.1).unwrap();
        for (x, xp) in [(0.0, 0.0), (0.5, -1.0), (2.0, 2.1)] {
            assert_eq!(spec.cross_cov_fn(1, 2, x, xp).unwrap(), 0.0);
            assert_eq!(spec.cross_cov_fn(2, 1, x, xp).unwrap(), 0.0);
        }
        let data = Dataset::new(vec![series(&[0.0, 0.5]), series(&[0.1, 0.7, 1.0]), series(&[0.3])]).unwrap();
        let gram = build_gram(&spec, &data).unwrap();
        assert!(gram.block(1, 2).iter().all(|&v| v == 0.0));
        assert!(gram.block(2, 1).iter().all(|&v| v == 0.0));
        assert!(gram.block(0, 1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn shared_private_auto_covariance_sums_components() {
        let mut spec =
            make_pairwise_spec(PairwiseVariant::SharedPrivate, 0, 1, &KernelSpec::se(1.0, 1.0), 0.1).unwrap();
        let shared = SeKernel::new(0.7, 2.0);
        let private = SeKernel::new(1.4, 0.6);
        *spec.kernel_mut(0, 0).unwrap() = KernelSpec::Se(shared);
        *spec.kernel_mut(1, 0).unwrap() = KernelSpec::Se(private);
        let d = 0.8;
        let expected = se_auto_cov(&private, d) + se_auto_cov(&shared, d);
        assert!((spec.cross_cov_fn(0, 0, d, 0.0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_amplitudes_remove_cross_covariance() {
        let mut spec = make_full_spec(3, 2, &KernelSpec::se(1.0, 1.0), 0.1).unwrap();
        for q in 0..2 {
            spec.kernel_mut(q, 2).unwrap().scale_amplitudes(0.0);
        }
        assert_eq!(spec.cross_cov_fn(0, 2, 0.3, 0.1).unwrap(), 0.0);
        assert_eq!(spec.cross_cov_fn(2, 1, 0.3, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn single_point_gram() {
        let spec = make_full_spec(1, 1, &KernelSpec::se(1.0, 1.0), 0.25).unwrap();
        let data = Dataset::new(vec![OutputSeries::new(vec![0.4], vec![1.0])]).unwrap();
        let gram = build_gram(&spec, &data).unwrap();
        assert_eq!(gram.matrix.dim(), 1);
        assert!((gram.matrix.get(0, 0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn param_round_trip_uses_log_noise() {
        let spec = make_arrowhead_spec(3, 1, &KernelSpec::se(1.0, 2.0), 0.5).unwrap();
        let p = spec.to_params();
        assert_eq!(p.len(), spec.n_params());
        assert!((p[p.len() - 1] - 0.5f64.ln()).abs() < 1e-15);
        let back = spec.with_params(&p).unwrap();
        for (a, b) in back.noise.iter().zip(&spec.noise) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(spec.with_params(&p[1..]).is_err());
    }

    #[test]
    fn mixed_families_on_one_latent_rejected() {
        let mut spec = make_full_spec(2, 1, &KernelSpec::se(1.0, 1.0), 0.1).unwrap();
        spec.kernels[0][1] = Some(KernelSpec::spectral(1.0, 1.0, 0.5));
        assert_eq!(spec.validate(), Err(MgpError::UnsupportedPair));
        assert_eq!(spec.cross_cov_fn(0, 1, 0.0, 0.0), Err(MgpError::UnsupportedPair));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![OutputSeries::new(vec![1.0], vec![])]).is_err());
        assert!(Dataset::new(vec![OutputSeries::new(vec![], vec![])]).is_err());
        assert!(Dataset::new(vec![OutputSeries::new(vec![f64::NAN], vec![1.0])]).is_err());
        let d = Dataset::new(vec![series(&[0.0, 1.0]), series(&[2.0])]).unwrap();
        assert_eq!(d.total_len(), 3);
        assert_eq!(d.blocks(), vec![0..2, 2..3]);
        assert_eq!(d.subset(&[1]).unwrap().outputs[0].x, vec![2.0]);
    }
}
