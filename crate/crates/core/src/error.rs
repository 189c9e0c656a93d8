use std::path::PathBuf;

use thiserror::Error;

/// Every failure the crate can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("no kink-free sample found after {tries} tries")]
    DegenerateSample { tries: usize },

    #[error("training diverged at iteration {iteration}; last good checkpoint: {checkpoint:?}")]
    TrainingDiverged { iteration: usize, checkpoint: Option<PathBuf> },

    #[error("need at least {needed} elements per layout, found {found}")]
    InsufficientElements { needed: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("image has no foreground pixel above threshold {threshold}")]
    EmptyForeground { threshold: f64 },

    #[error("generation failed: {0}")]
    GenerationFailed(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
