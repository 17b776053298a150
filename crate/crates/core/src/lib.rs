//! Multi-output Gaussian processes built from convolution processes.
//!
//! Outputs are modelled as sums of shared latent white-noise processes passed
//! through per-output smoothing kernels. Besides the classical model with `Q`
//! latents feeding every output, the crate provides two structures that can
//! decouple unrelated outputs with few parameters:
//!
//! * **arrowhead**: every auxiliary output shares a private latent with the
//!   target only, so the Gram matrix has an arrowhead block pattern and the
//!   likelihood factorizes;
//! * **pairwise**: one bivariate model per auxiliary output, fused by a
//!   product of experts.
//!
//! Sparsity-inducing penalties on the cross amplitudes turn fitting into an
//! automatic selection of related outputs.

pub mod error;
pub mod infer;
pub mod kernels;
pub mod numerics;
pub mod objective;
pub mod predict;
pub mod structures;

pub use error::{MgpError, Result};
