use thiserror::Error;

/// Everything that can go wrong while loading panels, fitting models or
/// running tests.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("column `{0}` is named more than once in the schema")]
    DuplicateColumn(String),

    #[error("schema needs at least one regressor column")]
    NoRegressors,

    #[error("panel is unbalanced: no observation for unit `{unit}` at time `{time}`")]
    MissingCell { unit: String, time: String },

    #[error("duplicate observation for unit `{unit}` at time `{time}`")]
    DuplicateCell { unit: String, time: String },

    #[error("non-numeric value `{value}` in column `{column}` (unit `{unit}`, time `{time}`)")]
    NonNumericValue {
        column: String,
        unit: String,
        time: String,
        value: String,
    },

    #[error("need N >= 2 units and T >= 2 periods with N(T-1) > K; got N={n_units}, T={n_periods}, K={n_regressors}")]
    TooFewUnitsOrPeriods {
        n_units: usize,
        n_periods: usize,
        n_regressors: usize,
    },

    #[error("regressor `{0}` is constant across all observations; intercepts are not accepted")]
    InterceptColumn(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("theta must lie in [0, 1], got {0}")]
    ThetaOutOfRange(f64),

    #[error("idiosyncratic variance must be positive, got {0}")]
    ZeroIdiosyncraticVariance(f64),

    #[error("design matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficientDesign { rank: usize, cols: usize },

    #[error("insufficient degrees of freedom: {0}")]
    InsufficientDegreesOfFreedom(String),

    #[error("sample too small for density estimation (n = {0})")]
    EmptySample(usize),

    #[error("bandwidth must be positive, got {0}")]
    NonpositiveBandwidth(f64),

    #[error("scale must be positive, got {0}")]
    NonpositiveScale(f64),

    #[error("Pearson residual must exceed -1, got {0}")]
    DeltaOutOfRange(f64),

    #[error("weights degenerate: total weight {total} does not exceed K = {k}")]
    DegenerateWeights { total: f64, k: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coefficient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("method mismatch: expected {expected}, got {got}")]
    MethodMismatch { expected: String, got: String },

    #[error("argument must be nonnegative, got {0}")]
    NegativeArgument(f64),

    #[error("total variation of the response is zero")]
    ZeroTotalVariation,

    #[error("too many outliers: {requested} requested, at most {max} possible")]
    TooManyOutliers { requested: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
