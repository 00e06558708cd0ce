use thiserror::Error;

/// Errors raised anywhere in the expansion pipeline.
#[derive(Debug, Error)]
pub enum PceError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis size for n={n}, p={p} overflows")]
    SizeOverflow { n: usize, p: usize },

    #[error("moment table too small: order {required} needed, table holds up to {available}")]
    TableTooSmall { required: u32, available: u32 },

    #[error("moment order {requested} exceeds the hard cap of {cap}")]
    OrderCap { requested: u32, cap: u32 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("covariance is singular (rank {rank} < {dim}); use reduce_singular_gaussian")]
    SingularCovariance { rank: usize, dim: usize },

    #[error("covariance has full rank {0}; no reduction needed")]
    NoReductionNeeded(usize),

    #[error("adjusted copula correlation is not positive semi-definite at pair ({0}, {1})")]
    CopulaNotPsd(usize, usize),

    #[error("moment table inconsistent or ill-conditioned at degree {degree} (index {index})")]
    IllConditioned { degree: u32, index: String },

    #[error("invalid basis index set: {0}")]
    InvalidIndexSet(String),

    #[error("basis was built from a different moment table")]
    TableMismatch,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("step size underflow at t = {t}: problem is too stiff for the explicit integrator")]
    StepSizeUnderflow { t: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("time {t} outside solved span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("Monte Carlo reference failed: {skipped} of {total} samples could not be solved")]
    TooManyFailures { skipped: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PceError>;
