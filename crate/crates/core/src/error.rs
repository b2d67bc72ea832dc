use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty index set")]
    EmptySubset,

    #[error("component {0} has no approved sampler")]
    NoSampler(usize),

    #[error("quadrature requires dimension <= 3, got {0}")]
    QuadratureDimension(usize),

    #[error("quadrature did not reach tolerance {tol:e} (last change {change:e})")]
    QuadratureNotConverged { tol: f64, change: f64 },

    #[error("grid does not cover component {component}: needs [{need_lo}, {need_hi}]")]
    GridTooNarrow { component: usize, need_lo: f64, need_hi: f64 },

    #[error("quadrature self-check failed for {quantity}: coarse {coarse:e}, fine {fine:e}")]
    QuadratureSelfCheck { quantity: String, coarse: f64, fine: f64 },

    #[error("overlap graph is disconnected ({0} components)")]
    Disconnected(usize),

    #[error("threshold {threshold} exceeds every weight (max {max_weight})")]
    NoComponentsKept { threshold: f64, max_weight: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("grid mismatch between curves")]
    GridMismatch,

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
