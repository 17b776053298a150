//! Smoothing kernels and their closed-form convolved covariances.
//!
//! Every output is a sum of latent white-noise processes, each passed through
//! its own smoothing kernel. The covariance between two outputs that share a
//! latent is the correlation integral `∫ K_i(u) K_j(u - d) du` of the two
//! kernels at lag `d = x - x'`. This module evaluates that integral in closed
//! form for two families:
//!
//! * squared exponential, `K(u) = α (πℓ²)^(-1/4) exp(-(u - μ)² / (2ℓ²))`.
//!   This scaling makes the self-correlation exactly `α² exp(-d² / (4ℓ²))`.
//! * spectral, `K(u) = Σ_q a_q exp(-σ_q² u²) cos(μ_q u)`.
//!
//! Amplitudes are signed. Length-scales and bandwidths only ever enter
//! squared (or as `|ℓ|`), so they are stored unconstrained.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    pub alpha: f64,
    pub ell: f64,
    /// Input offset of the kernel centre.
    #[serde(default)]
    pub shift: f64,
    /// Whether `shift` is a free parameter when fitting.
    #[serde(default)]
    pub free_shift: bool,
}

impl SeKernel {
    pub fn new(alpha: f64, ell: f64) -> Self {
        Self {
            alpha,
            ell,
            shift: 0.0,
            free_shift: false,
        }
    }

    pub fn with_shift(mut self, shift: f64, free: bool) -> Self {
        self.shift = shift;
        self.free_shift = free;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComponent {
    pub a: f64,
    pub sigma: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralKernel {
    pub components: Vec<SpectralComponent>,
}

impl SpectralKernel {
    pub fn single(a: f64, sigma: f64, mu: f64) -> Self {
        Self {
            components: vec![SpectralComponent { a, sigma, mu }],
        }
    }
}

/// Parameters of one smoothing kernel `K_qi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Se(SeKernel),
    Spectral(SpectralKernel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Se,
    Spectral,
}

impl std::str::FromStr for KernelFamily {
    type Err = MgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(Self::Se),
            "spectral" => Ok(Self::Spectral),
            other => Err(MgpError::InvalidSpec(format!("unknown kernel family '{other}'"))),
        }
    }
}

impl KernelSpec {
    pub fn se(alpha: f64, ell: f64) -> Self {
        Self::Se(SeKernel::new(alpha, ell))
    }

    pub fn spectral(a: f64, sigma: f64, mu: f64) -> Self {
        Self::Spectral(SpectralKernel::single(a, sigma, mu))
    }

    pub fn as_se(&self) -> Option<&SeKernel> {
        match self {
            Self::Se(k) => Some(k),
            Self::Spectral(_) => None,
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Self::Se(_) => KernelFamily::Se,
            Self::Spectral(_) => KernelFamily::Spectral,
        }
    }

    /// Signed amplitude parameters (`α` or every `a_q`).
    pub fn amplitudes(&self) -> Vec<f64> {
        match self {
            Self::Se(k) => vec![k.alpha],
            Self::Spectral(k) => k.components.iter().map(|c| c.a).collect(),
        }
    }

    /// Positions of the amplitude entries inside [`KernelSpec::params`].
    pub fn amplitude_slots(&self) -> Vec<usize> {
        match self {
            Self::Se(_) => vec![0],
            Self::Spectral(k) => (0..k.components.len()).map(|c| 3 * c).collect(),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.amplitudes().iter().all(|&a| a == 0.0)
    }

    /// Scales every amplitude by `factor`.
    pub fn scale_amplitudes(&mut self, factor: f64) {
        match self {
            Self::Se(k) => k.alpha *= factor,
            Self::Spectral(k) => k.components.iter_mut().for_each(|c| c.a *= factor),
        }
    }

    /// Free parameters in a fixed order: SE `[α, ℓ, (shift)]`, spectral
    /// `[a, σ, μ]` per component.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::Se(k) => {
                let mut p = vec![k.alpha, k.ell];
                if k.free_shift {
                    p.push(k.shift);
                }
                p
            }
            Self::Spectral(k) => k.components.iter().flat_map(|c| [c.a, c.sigma, c.mu]).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Self::Se(k) => 2 + usize::from(k.free_shift),
            Self::Spectral(k) => 3 * k.components.len(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.n_params());
        match self {
            Self::Se(k) => {
                k.alpha = p[0];
                k.ell = p[1];
                if k.free_shift {
                    k.shift = p[2];
                }
            }
            Self::Spectral(k) => {
                for (c, chunk) in k.components.iter_mut().zip(p.chunks(3)) {
                    c.a = chunk[0];
                    c.sigma = chunk[1];
                    c.mu = chunk[2];
                }
            }
        }
    }

    /// Pointwise value of the smoothing kernel (its impulse response).
    pub fn impulse_response(&self, u: f64) -> f64 {
        match self {
            Self::Se(k) => {
                let l2 = k.ell * k.ell;
                k.alpha * (PI * l2).powf(-0.25) * (-(u - k.shift).powi(2) / (2.0 * l2)).exp()
            }
            Self::Spectral(k) => k
                .components
                .iter()
                .map(|c| c.a * (-(c.sigma * c.sigma) * u * u).exp() * (c.mu * u).cos())
                .sum(),
        }
    }

    /// Width beyond which the kernel is negligible, per unit of decay.
    pub fn effective_length(&self) -> f64 {
        match self {
            Self::Se(k) => k.ell.abs(),
            Self::Spectral(k) => k.components.iter().map(|c| 1.0 / c.sigma.abs()).fold(0.0, f64::max),
        }
    }

    /// Centre of the kernel mass.
    pub fn centre(&self) -> f64 {
        match self {
            Self::Se(k) => k.shift,
            Self::Spectral(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Se(k) => {
                if !k.alpha.is_finite() || !k.ell.is_finite() || !k.shift.is_finite() {
                    return Err(MgpError::InvalidSpec("non-finite SE parameter".into()));
                }
                if k.ell == 0.0 {
                    return Err(MgpError::InvalidSpec("SE length-scale must be nonzero".into()));
                }
            }
            Self::Spectral(k) => {
                if k.components.is_empty() {
                    return Err(MgpError::InvalidSpec("spectral kernel has no components".into()));
                }
                for c in &k.components {
                    if !(c.a.is_finite() && c.sigma.is_finite() && c.mu.is_finite()) {
                        return Err(MgpError::InvalidSpec("non-finite spectral parameter".into()));
                    }
                    if c.sigma == 0.0 {
                        return Err(MgpError::InvalidSpec("spectral bandwidth must be nonzero".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `α² exp(-d² / (4ℓ²))`, the self-correlation of one SE kernel.
pub fn se_auto_cov(k: &SeKernel, d: f64) -> f64 {
    k.alpha * k.alpha * (-d * d / (4.0 * k.ell * k.ell)).exp()
}

/// Correlation integral of two SE kernels at lag `d`.
pub fn se_cross_cov(ki: &SeKernel, kj: &SeKernel, d: f64) -> f64 {
    if ki.alpha == 0.0 || kj.alpha == 0.0 {
        return 0.0;
    }
    let s = ki.ell * ki.ell + kj.ell * kj.ell;
    let r = (2.0 * (ki.ell * kj.ell).abs() / s).sqrt();
    let delta = d - (ki.shift - kj.shift);
    ki.alpha * kj.alpha * r * (-0.5 * delta * delta / s).exp()
}

/// Partial derivatives of [`se_cross_cov`] with respect to the parameters of
/// each kernel, in [`KernelSpec::params`] order. Returns the covariance value.
pub fn se_cross_cov_grad(ki: &SeKernel, kj: &SeKernel, d: f64, gi: &mut [f64], gj: &mut [f64]) -> f64 {
    let (li2, lj2) = (ki.ell * ki.ell, kj.ell * kj.ell);
    let s = li2 + lj2;
    let r = (2.0 * (ki.ell * kj.ell).abs() / s).sqrt();
    let delta = d - (ki.shift - kj.shift);
    let e = (-0.5 * delta * delta / s).exp();
    let base = r * e;
    let c = ki.alpha * kj.alpha * base;

    gi[0] = kj.alpha * base;
    gj[0] = ki.alpha * base;
    let q = delta * delta / (s * s);
    gi[1] = c * (0.5 / ki.ell - ki.ell / s + q * ki.ell);
    gj[1] = c * (0.5 / kj.ell - kj.ell / s + q * kj.ell);
    let dshift = c * delta / s;
    if ki.free_shift {
        gi[2] = dshift;
    }
    if kj.free_shift {
        gj[2] = -dshift;
    }
    c
}

/// Correlation integral of two spectral kernels at lag `d`.
pub fn spectral_cross_cov(ki: &SpectralKernel, kj: &SpectralKernel, d: f64) -> f64 {
    let mut total = 0.0;
    for s in &ki.components {
        for t in &kj.components {
            if s.a == 0.0 || t.a == 0.0 {
                continue;
            }
            let (ss, ts) = (s.sigma * s.sigma, t.sigma * t.sigma);
            let sum = ss + ts;
            let spread = 4.0 * ss * ts * d * d;
            let a1 = (-(s.mu - t.mu).powi(2) - spread) / (4.0 * sum);
            let a2 = (-(s.mu + t.mu).powi(2) - spread) / (4.0 * sum);
            let theta1 = (s.mu * ts + t.mu * ss) / sum;
            let theta2 = (s.mu * ts - t.mu * ss) / sum;
            let h = a1.exp() * (theta1 * d).cos() + a2.exp() * (theta2 * d).cos();
            total += 0.5 * s.a * t.a * (PI / sum).sqrt() * h;
        }
    }
    total
}

/// Closed-form correlation integral for any supported pair of kernels.
pub fn cross_cov(ki: &KernelSpec, kj: &KernelSpec, d: f64) -> Result<f64> {
    match (ki, kj) {
        (KernelSpec::Se(a), KernelSpec::Se(b)) => Ok(se_cross_cov(a, b, d)),
        (KernelSpec::Spectral(a), KernelSpec::Spectral(b)) => Ok(spectral_cross_cov(a, b, d)),
        _ => Err(MgpError::UnsupportedPair),
    }
}

/// Gradient of [`cross_cov`] with respect to both kernels' parameters.
///
/// SE pairs are differentiated analytically. Spectral pairs use central
/// differences of the closed form, one coordinate at a time.
pub fn cross_cov_grad(ki: &KernelSpec, kj: &KernelSpec, d: f64, gi: &mut [f64], gj: &mut [f64]) -> Result<f64> {
    match (ki, kj) {
        (KernelSpec::Se(a), KernelSpec::Se(b)) => Ok(se_cross_cov_grad(a, b, d, gi, gj)),
        (KernelSpec::Spectral(a), KernelSpec::Spectral(b)) => {
            let value = spectral_cross_cov(a, b, d);
            spectral_fd(a, b, d, gi, spectral_cross_cov);
            spectral_fd(b, a, d, gj, |k, other, d| spectral_cross_cov(other, k, d));
            Ok(value)
        }
        _ => Err(MgpError::UnsupportedPair),
    }
}

fn spectral_fd(
    k: &SpectralKernel,
    other: &SpectralKernel,
    d: f64,
    out: &mut [f64],
    f: impl Fn(&SpectralKernel, &SpectralKernel, f64) -> f64,
) {
    let mut work = k.clone();
    for (ci, c) in k.components.iter().enumerate() {
        for slot in 0..3 {
            let x = [c.a, c.sigma, c.mu][slot];
            let h = 1e-6 * x.abs().max(1.0);
            let set = |w: &mut SpectralKernel, v: f64| match slot {
                0 => w.components[ci].a = v,
                1 => w.components[ci].sigma = v,
                _ => w.components[ci].mu = v,
            };
            set(&mut work, x + h);
            let up = f(&work, other, d);
            set(&mut work, x - h);
            let down = f(&work, other, d);
            set(&mut work, x);
            out[3 * ci + slot] = (up - down) / (2.0 * h);
        }
    }
}
