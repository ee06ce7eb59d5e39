use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid matrix shape: {0}")]
    BadShape(String),
    #[error("matrix entry at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("iterative decomposition did not converge")]
    ConvergenceFailure,
    #[error("stream cannot be traversed a second time")]
    NotReplayable,
    #[error("malformed row stream: {0}")]
    InvalidStream(String),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("k = {k} exceeds the number of columns {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("exact oracle limited to {limit} enumerated indices, got {got}")]
    TooLarge { got: usize, limit: usize },
    #[error("input vector is not sorted in nonincreasing order")]
    NotSorted,
    #[error("matrix has an entry other than +1 or -1")]
    NotSignMatrix,
    #[error("empty input")]
    Empty,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed binary matrix at byte {offset}: {msg}")]
    BinaryFormat { offset: u64, msg: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
