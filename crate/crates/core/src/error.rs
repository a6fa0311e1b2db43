use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. `kind()` gives a stable tag used in
/// machine-readable error output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("value error: {0}")]
    Value(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("leakage error: {0}")]
    Leakage(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("missing workload: {0}")]
    MissingWorkload(String),
    #[error("unknown workload: {0}")]
    UnknownWorkload(String),
    #[error("duplicate workload: {0}")]
    DuplicateWorkload(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no bug-free data: {0}")]
    NoBugFreeData(String),
    #[error("bad length: {0}")]
    BadLength(String),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("no test data: {0}")]
    NoTestData(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("missing class: {0}")]
    MissingClass(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Schema(_) => "SchemaError",
            Error::Value(_) => "ValueError",
            Error::Manifest(_) => "ManifestError",
            Error::Leakage(_) => "LeakageError",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InsufficientData(_) => "InsufficientData",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::MissingWorkload(_) => "MissingWorkload",
            Error::UnknownWorkload(_) => "UnknownWorkload",
            Error::DuplicateWorkload(_) => "DuplicateWorkload",
            Error::EmptyInput(_) => "EmptyInput",
            Error::NoBugFreeData(_) => "NoBugFreeData",
            Error::BadLength(_) => "BadLength",
            Error::KeyMismatch(_) => "KeyMismatch",
            Error::Config(_) => "ConfigError",
            Error::NoTestData(_) => "NoTestData",
            Error::Grid(_) => "GridError",
            Error::MissingClass(_) => "MissingClass",
            Error::Model(_) => "ModelError",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
