//! Dense symmetric matrices and a jitter-escalating Cholesky factorization.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{MgpError, Result};

/// Diagonal jitter values tried in order until the factorization succeeds.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

thread_local! {
    static LARGEST_ALLOCATION: Cell<usize> = const { Cell::new(0) };
}

/// Instrumentation hook recording the largest square dense matrix allocated on
/// the current thread. Used to check that block-factorized code paths never
/// materialize the full joint Gram matrix.
pub mod alloc_probe {
    use super::LARGEST_ALLOCATION;

    pub fn reset() {
        LARGEST_ALLOCATION.with(|c| c.set(0));
    }

    pub fn largest_dimension() -> usize {
        LARGEST_ALLOCATION.with(|c| c.get())
    }

    pub(crate) fn record(n: usize) {
        LARGEST_ALLOCATION.with(|c| {
            if n > c.get() {
                c.set(n)
            }
        });
    }
}

/// Dense symmetric matrix stored in full row-major form. Writes go through
/// [`SymMatrix::set`], which mirrors the entry, so symmetry is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        alloc_probe::record(n);
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds a matrix from rows, rejecting input that is not exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(MgpError::DimensionMismatch { expected: 1, found: 0 });
        }
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(MgpError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if rows[j][i] != v {
                    return Err(MgpError::InvalidSpec(format!("matrix is not symmetric at ({i}, {j})")));
                }
                m.entries[i * n + j] = v;
            }
        }
        Ok(m)
    }

    /// Builds an `n x n` matrix from a generator evaluated on the lower triangle.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.entries[i * self.n + i] += v;
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }
}

/// Lower Cholesky factor of `m + jitter_used * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    n: usize,
    lower: Vec<f64>,
    jitter_used: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// Dense `L Lᵀ`, the jittered matrix that was factorized.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            let (ri, rj) = (&self.lower[i * n..i * n + n], &self.lower[j * n..j * n + n]);
            dot(&ri[..=j], &rj[..=j])
        })
    }

    /// Solves `L z = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s = b[i] - dot(row, &b[..i]);
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// Solves `Lᵀ x = z` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// Dense inverse of the factorized matrix.
    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        // Invert L column by column, then form L⁻ᵀ L⁻¹.
        let mut linv = vec![0.0; n * n];
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            for i in col..n {
                let mut s = e[i];
                for k in col..i {
                    s -= self.lower[i * n + k] * e[k];
                }
                e[i] = s / self.lower[i * n + i];
            }
            for i in col..n {
                linv[i * n + col] = e[i];
            }
        }
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn try_cholesky(m: &SymMatrix, jitter: f64) -> Option<Vec<f64>> {
    let n = m.n;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                let d = m.get(i, i) + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (m.get(i, j) - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Factorizes `m + jitter * I`, escalating the jitter along [`JITTER_LADDER`].
pub fn cholesky_with_jitter(m: &SymMatrix) -> Result<CholFactor> {
    if m.n == 0 {
        return Err(MgpError::DimensionMismatch { expected: 1, found: 0 });
    }
    for &jitter in JITTER_LADDER.iter() {
        if let Some(lower) = try_cholesky(m, jitter) {
            return Ok(CholFactor {
                n: m.n,
                lower,
                jitter_used: jitter,
            });
        }
    }
    Err(MgpError::NotPositiveDefinite {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Solves `(L Lᵀ) x = b`.
pub fn chol_solve(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != f.n {
        return Err(MgpError::DimensionMismatch {
            expected: f.n,
            found: b.len(),
        });
    }
    let mut x = b.to_vec();
    f.solve_lower_in_place(&mut x);
    f.solve_upper_in_place(&mut x);
    Ok(x)
}

/// `log |L Lᵀ|`.
pub fn chol_logdet(f: &CholFactor) -> f64 {
    2.0 * (0..f.n).map(|i| f.lower(i, i).ln()).sum::<f64>()
}
