//! Dense linear algebra, quadrature and finite differences.

mod diff;
mod linalg;
mod quadrature;

pub use diff::finite_diff_grad;
pub use linalg::{alloc_probe, chol_logdet, chol_solve, cholesky_with_jitter, CholFactor, SymMatrix, JITTER_LADDER};
pub use quadrature::quadrature_cross_cov;
