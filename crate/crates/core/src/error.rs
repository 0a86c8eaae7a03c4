use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty row")]
    EmptyRow,

    #[error("infeasible params: {0}")]
    InfeasibleParams(String),

    #[error("degenerate row sum: Z = {0}")]
    DegenerateRowSum(i32),

    #[error("row sum below int8-path floor: Z = {0} < 256")]
    BelowU8Floor(i32),

    #[error("row sum overflows 32 bits")]
    RowSumOverflow,

    #[error("unknown head {0}")]
    UnknownHead(u32),

    #[error("non-finite input at index {0}")]
    NonFinite(usize),

    #[error("invalid dequantization scale {0}")]
    InvalidScale(f64),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unsupported support mismatch at index {0}: q = 0 where p > 0")]
    SupportMismatch(usize),

    #[error("empty feasible grid")]
    EmptyFeasibleGrid,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by reading or decoding external files.
    pub fn is_io_or_parse(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::Schema(_)
        )
    }
}
