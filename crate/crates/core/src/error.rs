use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty word where a nonempty word is required")]
    EmptyWord,

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: usize, alphabet: usize },

    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),

    #[error("row {row} of stochastic matrix sums to {sum}")]
    NonStochastic { row: usize, sum: f64 },

    #[error("probability vector {index} is invalid: {reason}")]
    InvalidProbabilities { index: usize, reason: String },

    #[error("requested {requested} coordinates but the point only represents {available}")]
    DepthExceedsRepresentation { requested: usize, available: usize },

    #[error("symbol stream ended after {got} symbols, {needed} required")]
    StreamTooShort { needed: usize, got: usize },

    #[error("index {index} outside materialized window [{lo}, {hi})")]
    OutOfWindow { index: isize, lo: isize, hi: isize },

    #[error("cylinder has zero mass")]
    ZeroMass,

    #[error("depth {depth} exceeds cap {cap}")]
    DepthCap { depth: usize, cap: usize },

    #[error("eigendata did not converge: residual {residual:e} > tolerance {tol:e}")]
    NonConvergence { residual: f64, tol: f64 },

    #[error("exact mode unavailable: {0}")]
    ExactModeUnavailable(String),

    #[error("computation budget exceeded: {0}")]
    Budget(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
