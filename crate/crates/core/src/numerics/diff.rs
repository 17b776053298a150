use crate::error::{MgpError, Result};

/// Central-difference gradient with per-coordinate step `1e-5 * max(1, |θ_i|)`.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = theta.to_vec();
    if !f(&x).is_finite() {
        return Err(MgpError::NonFiniteObjective);
    }
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = 1e-5 * theta[i].abs().max(1.0);
        x[i] = theta[i] + h;
        let up = f(&x);
        x[i] = theta[i] - h;
        let down = f(&x);
        x[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(MgpError::NonFiniteObjective);
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}
