use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layer count {got} exceeds the limit of {limit} for {operation}")]
    LayerCountTooLarge {
        operation: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("unsupported bit width {0} (expected 2 or 4)")]
    UnsupportedBitWidth(u32),

    #[error("non-finite loss encountered: {0}")]
    NonFiniteLoss(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shrinkage alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("target average bits {target} outside [{low}, {high}]")]
    TargetOutOfRange { target: f64, low: u32, high: u32 },

    #[error("allocation problem is infeasible: {0}")]
    Infeasible(String),

    #[error("zero vector in batch at index {0}")]
    ZeroVector(usize),

    #[error("zero activation norm for layer {0}")]
    ZeroNorm(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
