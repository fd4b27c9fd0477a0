use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: invalid record: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("line {line}: unknown {kind} `{name}` not present in the fixed vocabulary")]
    UnknownName {
        line: usize,
        kind: &'static str,
        name: String,
    },

    #[error("cannot encode match {match_id}: {message}")]
    Encode { match_id: String, message: String },

    #[error("underdetermined system: {rows} rows for {cols} columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("all reassignment weights are zero")]
    DegenerateWeights,

    #[error("unknown player `{0}`")]
    UnknownPlayer(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Malformed { .. } => "malformed",
            Error::InvalidRecord { .. } => "invalid_record",
            Error::UnknownName { .. } => "unknown_name",
            Error::Encode { .. } => "encode",
            Error::Underdetermined { .. } => "underdetermined",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::DegenerateWeights => "degenerate_weights",
            Error::UnknownPlayer(_) => "unknown_player",
            Error::Empty(_) => "empty",
            Error::InfeasibleSpec(_) => "infeasible_spec",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Line number in the input, for parse errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            Error::Malformed { line, .. }
            | Error::InvalidRecord { line, .. }
            | Error::UnknownName { line, .. } => Some(*line),
            _ => None,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
