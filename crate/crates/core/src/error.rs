use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input has no data rows")]
    EmptyInput,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("row {0}: empty variable label")]
    EmptyLabel(usize),
    #[error("duplicate reshape key `{0}`")]
    DuplicateKey(String),
    #[error("template `{0}` must contain `{{key}}` exactly once")]
    TemplateMissingPlaceholder(String),

    #[error("embedding provider unavailable at {endpoint}: {reason}")]
    ProviderUnavailable { endpoint: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("vector for model `{model_id}` is not unit-normalized (norm {norm})")]
    NotNormalized { model_id: String, norm: f64 },

    #[error("unknown source variable `{0}`")]
    UnknownSource(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("source variable `{0}` appears in both training and test sets")]
    SourceOverlap(String),

    #[error("training data contains a single class")]
    SingleClassData,
    #[error("feature schema mismatch: expected {expected} features, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("need at least {needed} source variables, have {have}")]
    TooFewSources { needed: usize, have: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no gold target of `{0}` is present in its ranked list")]
    GoldMissing(String),
    #[error("sample lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("feature groups must partition the schema: {0}")]
    InvalidGroups(String),

    #[error("malformed verdict `{0}`")]
    MalformedVerdict(String),
    #[error("no accepted labels to train on")]
    InsufficientLabels,
    #[error("a retrain is already in progress")]
    RetrainInProgress,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
