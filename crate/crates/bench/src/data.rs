//! Synthetic datasets and scoring.

use mgp_core::numerics::{cholesky_with_jitter, SymMatrix};
use mgp_core::structures::{Dataset, OutputSeries};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| {
                if k + 1 == n {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn noisy(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Noise-free mean of sinusoid output `i` (0-based).
pub fn sines_mean(i: usize, x: f64) -> f64 {
    match i {
        0 => 5.0 * (1.5 * x).sin(),
        1 => 5.0 * x.sin() - 3.0,
        2 => x * x / 10.0 - 5.0,
        _ => panic!("sinusoid output {i} does not exist"),
    }
}

/// Three outputs on `p` evenly spaced inputs over `[0, 10]` with Gaussian
/// noise of standard deviation `noise_sd`.
pub fn gen_sines(seed: u64, p: usize, noise_sd: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = linspace(0.0, 10.0, p);
    let outputs = (0..3)
        .map(|i| {
            let y = x.iter().map(|&v| noisy(&mut rng, sines_mean(i, v), noise_sd)).collect();
            OutputSeries::new(x.clone(), y)
        })
        .collect();
    Dataset::new(outputs).expect("generated sinusoid data is well formed")
}

/// Group function `g` (0-based, four groups).
pub fn group_fn(g: usize, x: f64) -> f64 {
    match g {
        0 => x * x / (0.8 * (1.0 - x)),
        1 => x / (1.0 - x),
        2 => 2.0 * x * x,
        3 => x * x * x,
        _ => panic!("group {g} does not exist"),
    }
}

/// Noise standard deviations of the eight grouped outputs.
pub const GROUP_NOISE: [f64; 8] = [0.1, 0.1, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01];

/// Noise-free mean of grouped output `i`; outputs `2g` and `2g + 1` share
/// group function `g`.
pub fn groups_mean(i: usize, x: f64) -> f64 {
    group_fn(i / 2, x)
}

/// Eight outputs in four groups on `p` evenly spaced inputs over `[0, 0.8]`.
pub fn gen_groups(seed: u64, p: usize) -> Dataset {
    gen_groups_with(seed, p, &GROUP_NOISE)
}

pub fn gen_groups_with(seed: u64, p: usize, noise_sd: &[f64; 8]) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = linspace(0.0, 0.8, p);
    let outputs = (0..8)
        .map(|i| {
            let y = x
                .iter()
                .map(|&v| noisy(&mut rng, groups_mean(i, v), noise_sd[i]))
                .collect();
            OutputSeries::new(x.clone(), y)
        })
        .collect();
    Dataset::new(outputs).expect("generated group data is well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpSetting {
    N20,
    N50,
}

impl std::str::FromStr for GpSetting {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n20" => Ok(Self::N20),
            "n50" => Ok(Self::N50),
            _ => Err(BenchError::Config(format!("unknown GP setting `{s}`"))),
        }
    }
}

/// Generating parameters of one output: `α² exp(-d² / 2ℓ²)` plus noise `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpBlock {
    pub alpha: f64,
    pub ell: f64,
    pub sigma: f64,
}

impl GpSetting {
    pub fn blocks(self) -> Vec<GpBlock> {
        let table: &[(usize, f64, f64, f64)] = match self {
            Self::N20 => &[(5, 4.0, 1.0, 0.005), (7, 1.0, 4.0, 0.0001), (8, 4.0, 1.0, 0.001)],
            Self::N50 => &[
                (9, 4.0, 1.0, 0.001),
                (10, 1.0, 4.0, 0.0001),
                (10, 1.0, 8.0, 0.0001),
                (10, 8.0, 1.0, 0.001),
                (11, 3.0, 1.0, 0.005),
            ],
        };
        table
            .iter()
            .flat_map(|&(n, alpha, ell, sigma)| std::iter::repeat_n(GpBlock { alpha, ell, sigma }, n))
            .collect()
    }
}

pub fn gp_kernel(block: &GpBlock, d: f64) -> f64 {
    block.alpha * block.alpha * (-d * d / (2.0 * block.ell * block.ell)).exp()
}

pub const GP_GRID_POINTS: usize = 15;
pub const GP_TRAIN_POINTS: usize = 8;

/// Independent GP draws on a 15-point grid over `[0, 3]`, with one random
/// 8/7 train/test split shared by every output.
#[derive(Debug, Clone)]
pub struct GpDraws {
    pub full: Dataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl GpDraws {
    fn pick(&self, idx: &[usize]) -> Dataset {
        let outputs = self
            .full
            .outputs
            .iter()
            .map(|o| {
                OutputSeries::new(
                    idx.iter().map(|&k| o.x[k]).collect(),
                    idx.iter().map(|&k| o.y[k]).collect(),
                )
            })
            .collect();
        Dataset::new(outputs).expect("split of valid data is valid")
    }

    pub fn train(&self) -> Dataset {
        self.pick(&self.train_idx)
    }

    pub fn test(&self) -> Dataset {
        self.pick(&self.test_idx)
    }
}

/// One noise-free GP sample path for `block` on inputs `x`.
pub fn sample_gp_path(rng: &mut ChaCha8Rng, block: &GpBlock, x: &[f64]) -> Vec<f64> {
    let cov = SymMatrix::from_fn(x.len(), |a, b| gp_kernel(block, x[a] - x[b]));
    let factor = cholesky_with_jitter(&cov).expect("jittered SE covariance factorizes");
    let z: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(rng)).collect();
    (0..x.len())
        .map(|a| (0..=a).map(|b| factor.lower(a, b) * z[b]).sum())
        .collect()
}

pub fn gen_gp_draws(seed: u64, setting: GpSetting) -> GpDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = linspace(0.0, 3.0, GP_GRID_POINTS);
    let mut order: Vec<usize> = (0..GP_GRID_POINTS).collect();
    order.shuffle(&mut rng);
    let mut train_idx = order[..GP_TRAIN_POINTS].to_vec();
    let mut test_idx = order[GP_TRAIN_POINTS..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let outputs = setting
        .blocks()
        .iter()
        .map(|b| {
            let f = sample_gp_path(&mut rng, b, &x);
            let y = f.iter().map(|&m| noisy(&mut rng, m, b.sigma)).collect();
            OutputSeries::new(x.clone(), y)
        })
        .collect();
    GpDraws {
        full: Dataset::new(outputs).expect("generated GP data is well formed"),
        train_idx,
        test_idx,
    }
}

/// Mean squared difference between `pred` and `truth`.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(BenchError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(BenchError::Empty);
    }
    Ok(pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_means() {
        assert_eq!(sines_mean(0, 0.0), 0.0);
        assert_eq!(sines_mean(1, 0.0), -3.0);
        assert!((sines_mean(2, 10.0) - 5.0).abs() < 1e-12);
        let clean = gen_sines(1, 20, 0.0);
        for (i, o) in clean.outputs.iter().enumerate() {
            assert_eq!(o.len(), 20);
            assert!(o.x.iter().zip(&o.y).all(|(&x, &y)| y == sines_mean(i, x)));
        }
        assert_eq!(clean.outputs[0].x[19], 10.0);
    }

    #[test]
    fn group_functions() {
        assert_eq!(group_fn(2, 0.5), 0.5);
        assert_eq!(group_fn(3, 1.0), 1.0);
        assert_eq!(group_fn(0, 0.0), 0.0);
        let clean = gen_groups_with(3, 7, &[0.0; 8]);
        assert_eq!(clean.n_outputs(), 8);
        assert!(clean
            .outputs
            .iter()
            .all(|o| o.x.iter().all(|&x| (0.0..=0.8).contains(&x))));
        assert_eq!(clean.outputs[7].y[6], group_fn(3, 0.8));
    }

    #[test]
    fn gp_draw_shapes_and_split() {
        let d20 = gen_gp_draws(4, GpSetting::N20);
        assert_eq!(d20.full.n_outputs(), 20);
        assert!(d20.full.outputs.iter().all(|o| o.len() == 15));
        let mut all = [d20.train_idx.clone(), d20.test_idx.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..15).collect::<Vec<_>>());
        assert_eq!((d20.train_idx.len(), d20.test_idx.len()), (8, 7));

        let blocks = GpSetting::N50.blocks();
        assert_eq!(blocks.len(), 50);
        assert_eq!(
            blocks[8],
            GpBlock {
                alpha: 4.0,
                ell: 1.0,
                sigma: 0.001
            }
        );
        assert_eq!(
            blocks[19],
            GpBlock {
                alpha: 1.0,
                ell: 8.0,
                sigma: 0.0001
            }
        );
        assert_eq!(
            blocks[49],
            GpBlock {
                alpha: 3.0,
                ell: 1.0,
                sigma: 0.005
            }
        );
        assert_eq!(gen_gp_draws(4, GpSetting::N50).full.n_outputs(), 50);
    }

    #[test]
    fn sample_covariance_matches_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = linspace(0.0, 3.0, 15);
        let block = GpBlock {
            alpha: 4.0,
            ell: 1.0,
            sigma: 0.0,
        };
        let (a, b) = (2, 5);
        let draws = 2000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let f = sample_gp_path(&mut rng, &block, &x);
            acc += f[a] * f[b];
        }
        let sample = acc / draws as f64;
        let truth = gp_kernel(&block, x[a] - x[b]);
        assert!((sample - truth).abs() / truth < 0.05, "{sample} vs {truth}");
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(
            mse(&[0.0], &[1.0, 1.0]),
            Err(BenchError::LengthMismatch { .. })
        ));
    }
}
