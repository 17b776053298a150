use thiserror::Error;

/// Errors raised by model construction, fitting and prediction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MgpError {
    #[error("matrix is not positive definite (factorization failed at jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel is not integrable: {0}")]
    NonIntegrableKernel(String),

    #[error("objective is not finite")]
    NonFiniteObjective,

    #[error("kernel families cannot be mixed on one latent function")]
    UnsupportedPair,

    #[error("invalid target output {target} for a model with {n_outputs} outputs")]
    InvalidTarget { target: usize, n_outputs: usize },

    #[error("operation requires a {expected} topology")]
    WrongTopology { expected: &'static str },

    #[error("invalid penalty configuration: {0}")]
    InvalidPenaltyConfig(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("all {restarts} restarts failed; last error: {last}")]
    AllRestartsFailed { restarts: usize, last: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("analytic gradient disagrees with finite differences at coordinate {index}: analytic {analytic}, numeric {numeric}")]
    GradientCheckFailed { index: usize, analytic: f64, numeric: f64 },

    #[error("expert set is empty")]
    EmptyExpertSet,

    #[error("expert weights are degenerate: {0}")]
    DegenerateWeights(String),

    #[error("test set is empty")]
    EmptyTestSet,
}

pub type Result<T> = std::result::Result<T, MgpError>;
