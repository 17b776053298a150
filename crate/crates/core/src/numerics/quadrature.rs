//! Brute-force evaluation of the kernel correlation integral.

use crate::error::{MgpError, Result};
use crate::kernels::KernelSpec;

/// Half-width of the integration window, in effective length-scales.
const WINDOW: f64 = 10.0;
const TOLERANCE: f64 = 1e-9;
const MIN_INTERVALS: usize = 256;
const MAX_INTERVALS: usize = 1 << 22;

/// Numerically evaluates `∫ K_i(u) K_j(u - d) du` with the composite
/// trapezoid rule, doubling the grid until successive estimates differ by
/// less than `1e-9`. The window covers both kernels' centres (the second one
/// displaced by `d`) plus ten effective length-scales on each side.
pub fn quadrature_cross_cov(ki: &KernelSpec, kj: &KernelSpec, d: f64) -> Result<f64> {
    if ki.is_identically_zero() || kj.is_identically_zero() {
        return Ok(0.0);
    }
    for k in [ki, kj] {
        let len = k.effective_length();
        if !len.is_finite() || len == 0.0 || has_zero_scale(k) {
            return Err(MgpError::NonIntegrableKernel(format!("{k:?}")));
        }
    }
    let half = WINDOW * ki.effective_length().max(kj.effective_length());
    let (ci, cj) = (ki.centre(), kj.centre() + d);
    let lo = ci.min(cj) - half;
    let hi = ci.max(cj) + half;

    let integrand = |u: f64| ki.impulse_response(u) * kj.impulse_response(u - d);

    let mut n = MIN_INTERVALS;
    let mut h = (hi - lo) / n as f64;
    let mut sum = 0.5 * (integrand(lo) + integrand(hi)) + (1..n).map(|k| integrand(lo + k as f64 * h)).sum::<f64>();
    let mut estimate = sum * h;
    loop {
        // Refinement reuses the previous nodes; only midpoints are new.
        let mids: f64 = (0..n).map(|k| integrand(lo + (k as f64 + 0.5) * h)).sum();
        sum += mids;
        n *= 2;
        h *= 0.5;
        let refined = sum * h;
        let change = (refined - estimate).abs();
        estimate = refined;
        if change < TOLERANCE || n >= MAX_INTERVALS {
            return Ok(estimate);
        }
    }
}

fn has_zero_scale(k: &KernelSpec) -> bool {
    match k {
        KernelSpec::Se(s) => s.ell == 0.0,
        KernelSpec::Spectral(s) => s.components.iter().any(|c| c.sigma == 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SeKernel;

    #[test]
    fn zero_kernel_integrates_to_zero() {
        let z = KernelSpec::se(0.0, 1.0);
        let k = KernelSpec::se(2.0, 0.4);
        assert_eq!(quadrature_cross_cov(&z, &k, 0.3).unwrap(), 0.0);
        assert_eq!(quadrature_cross_cov(&k, &z, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn se_unit_self_correlation() {
        let k = KernelSpec::se(1.0, 1.0);
        let v = quadrature_cross_cov(&k, &k, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn se_mixed_length_scales() {
        let a = KernelSpec::se(1.0, 1.0);
        let b = KernelSpec::se(1.0, 2.0);
        let v = quadrature_cross_cov(&a, &b, 0.0).unwrap();
        assert!((v - 0.8f64.sqrt()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn se_auto_at_lag_two_matches_exp_minus_one() {
        let k = KernelSpec::se(1.0, 1.0);
        let v = quadrature_cross_cov(&k, &k, 2.0).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-6, "{v}");
    }

    #[test]
    fn zero_length_scale_rejected() {
        let a = KernelSpec::Se(SeKernel::new(1.0, 0.0));
        let b = KernelSpec::se(1.0, 1.0);
        assert!(matches!(
            quadrature_cross_cov(&a, &b, 0.0),
            Err(MgpError::NonIntegrableKernel(_))
        ));
        let s = KernelSpec::spectral(1.0, 0.0, 1.0);
        assert!(quadrature_cross_cov(&s, &s, 0.0).is_err());
    }

    #[test]
    fn swapping_kernels_negates_lag() {
        let a = KernelSpec::Se(SeKernel::new(1.2, 0.6).with_shift(0.3, false));
        let b = KernelSpec::se(-0.8, 1.4);
        for d in [0.0, 0.5, -1.0, 3.0] {
            let x = quadrature_cross_cov(&a, &b, d).unwrap();
            let y = quadrature_cross_cov(&b, &a, -d).unwrap();
            assert!((x - y).abs() < 1e-9);
        }
    }
}
