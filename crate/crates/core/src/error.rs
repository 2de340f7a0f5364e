use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate channel {channel}{}: {reason}", trial.map(|t| format!(" in trial {t}")).unwrap_or_default())]
    DegenerateChannel {
        channel: usize,
        trial: Option<usize>,
        reason: &'static str,
    },

    #[error("cannot stratify subject {subject}: {trials} trials over {folds} folds")]
    StratificationImpossible {
        subject: usize,
        trials: usize,
        folds: usize,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model spec error at layer {layer}: {message}")]
    Spec { layer: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("zero relevance denominator at layer {layer}, neuron {neuron} (epsilon = 0)")]
    ZeroDenominator { layer: usize, neuron: usize },

    #[error("coefficient of variation undefined: mean relevance signal is zero")]
    UndefinedCov,

    #[error("index out of range: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INPUT",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::DegenerateChannel { .. } => "E_DEGENERATE",
            Error::StratificationImpossible { .. } => "E_STRATIFY",
            Error::Parse { .. } => "E_PARSE",
            Error::Spec { .. } => "E_SPEC",
            Error::Shape(_) => "E_SHAPE",
            Error::Model(_) => "E_MODEL",
            Error::ZeroDenominator { .. } => "E_ZERO_DENOM",
            Error::UndefinedCov => "E_COV",
            Error::Range(_) => "E_RANGE",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
        }
    }
}
