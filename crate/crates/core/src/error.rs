use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: pirads out of range: {value} (expected 1..=5)")]
    PiradsOutOfRange { line: u64, value: i64 },

    #[error("line {line}: score out of range: {value} (expected 0..=100)")]
    ScoreOutOfRange { line: u64, value: f64 },

    #[error("line {line}: duplicate {what} `{key}`")]
    Duplicate { line: u64, what: &'static str, key: String },

    #[error("line {line}: unknown verification code `{code}`")]
    UnknownVerification { line: u64, code: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: u64, field: &'static str },

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("single class: {0}")]
    SingleClass(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("no positive outcomes in the fit population")]
    NoPositiveOutcomes,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
