use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("log is empty after cleaning")]
    EmptyAfterCleaning,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("too few logs: need at least {needed}, got {got}")]
    TooFewLogs { needed: usize, got: usize },
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("invalid pattern `{pattern}`: {message}")]
    InvalidPattern { pattern: String, message: String },
    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("no masked positions in batch")]
    NoMaskedPositions,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("checkpoint mismatch: expected {expected}, found {found}")]
    CheckpointMismatch { expected: String, found: String },
    #[error("empty score list")]
    EmptyScores,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("length mismatch: {left} verdicts vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("ground truth contains no anomalies")]
    NoAnomaliesInTruth,
    #[error("data leakage: {} test log(s) also appear in training or calibration data, first: `{}`", .0.len(), .0.first().map(|c| c.text.as_str()).unwrap_or(""))]
    Leakage(Vec<crate::detect::Collision>),
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyAfterCleaning => "EmptyAfterCleaning",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::TooFewLogs { .. } => "TooFewLogs",
            Error::UnknownId(_) => "UnknownId",
            Error::InvalidPattern { .. } => "InvalidPattern",
            Error::ConfigInvalid { .. } => "ConfigInvalid",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteActivation(_) => "NonFiniteActivation",
            Error::NonFiniteGradient(_) => "NonFiniteGradient",
            Error::NoMaskedPositions => "NoMaskedPositions",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::VocabMismatch { .. } => "VocabMismatch",
            Error::CheckpointMismatch { .. } => "CheckpointMismatch",
            Error::EmptyScores => "EmptyScores",
            Error::NonFiniteScore(_) => "NonFiniteScore",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NoAnomaliesInTruth => "NoAnomaliesInTruth",
            Error::Leakage(_) => "Leakage",
            Error::Format { .. } => "Format",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            message: message.into(),
        }
    }
}
