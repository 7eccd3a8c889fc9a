use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),

    #[error("H1 = {h1} is not positive; the field has no Hölder regularity to estimate")]
    NonPositiveH1 { h1: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integral diverges at infinity (partial value {partial:e})")]
    DivergentTail { partial: f64 },

    #[error("integral diverges at the origin (partial value {partial:e})")]
    DivergentAtOrigin { partial: f64 },

    #[error("quadrature did not reach tolerance: value {value:e}, error estimate {error:e}")]
    NotConverged { value: f64, error: f64 },

    #[error("quadrature failure while evaluating {what}: {detail}")]
    QuadratureFailure { what: &'static str, detail: String },

    #[error("importance weights appear to have infinite variance")]
    InfiniteVarianceSuspected,

    #[error("spatial increments have infinite variance (H2 = {h2} >= 1); set an infrared cutoff")]
    InfraredDivergence { h2: f64 },

    #[error("Gram matrix is not positive semidefinite even with jitter {jitter:e}")]
    GramNotPsd { jitter: f64 },

    #[error("conditioning Gram matrix is singular (jitter reached {jitter:e})")]
    SingularGram { jitter: f64 },

    #[error("spectral truncation bias {bias:.3} at lag {lag:e} exceeds the 5% limit")]
    TruncationBiasExceeded { lag: f64, bias: f64 },

    #[error("level {level} has only {pairs} increment pairs")]
    InsufficientPairs { level: usize, pairs: usize },

    #[error("finite-difference error estimate {estimate:.3} exceeds 10%; refine the grid")]
    GridTooCoarse { estimate: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),
}
