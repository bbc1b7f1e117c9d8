use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column `{column}` in {path}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ticker `{0}` not present in input")]
    UnknownTicker(String),

    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("unknown comment id `{0}`")]
    MissingId(String),

    #[error("embedding file error: {0}")]
    Embedding(String),

    #[error(
        "layout diverged at epoch {epoch}: coordinate magnitude {magnitude:e} at vertex {vertex}"
    )]
    Divergence {
        epoch: usize,
        vertex: usize,
        magnitude: f64,
    },

    #[error("sigma search did not converge for vertex {vertex}")]
    Calibration { vertex: usize },

    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("column `{0}` is constant over the training rows")]
    ConstantColumn(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
