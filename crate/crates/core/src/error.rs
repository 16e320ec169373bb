use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected dim={expected}, got dim={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {index} lies outside the unit-diameter ball (norm {norm})")]
    OutsideBall { index: usize, norm: f64 },

    #[error("point lies outside the cube [-1/2, 1/2]^d")]
    OutsideCube,

    #[error("sampler exhausted: {required} samples required, {available} available")]
    SamplerExhausted { required: usize, available: usize },

    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("budget exceeded: needs {count}, cap {cap}; {hint}")]
    BudgetExceeded { count: f64, cap: f64, hint: &'static str },

    #[error("OPT indistinguishable from 0 at this budget (stopped after {iterations} iterations)")]
    OptIndistinguishable { iterations: usize },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("coreset has {size} points, above the size bound {bound}")]
    SizeBound { size: usize, bound: f64 },

    #[error("statistic value {0} outside [0, 1]")]
    QueryOutOfRange(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the algorithm or its budget rather than
    /// by configuration or IO.
    pub fn is_algorithmic(&self) -> bool {
        matches!(
            self,
            Error::OptIndistinguishable { .. }
                | Error::BudgetExceeded { .. }
                | Error::SamplerExhausted { .. }
                | Error::Oracle(_)
                | Error::SizeBound { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
