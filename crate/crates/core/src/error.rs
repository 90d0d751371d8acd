use std::path::PathBuf;

/// Every failure the toolkit reports.
///
/// The variants map onto the error classes the CLI distinguishes by exit
/// code (see [`Error::category`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    InputShape(String),

    #[error("invalid class id {id} (model has {num_classes} classes)")]
    InvalidClass { id: usize, num_classes: usize },

    #[error("mask error: {0}")]
    Mask(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("augmentation `{0}` was part of the original training pipeline")]
    AugmentationConflict(String),

    #[error("mini-batch is empty")]
    EmptyBatch,

    #[error("invalid class partition: {0}")]
    InvalidPartition(String),

    #[error("invalid method spec: {0}")]
    Spec(String),

    #[error("cannot compare reports: {0}")]
    Comparison(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Checkpoint,
    Mask,
    Other,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Unknown { .. } | Error::Spec(_) => Category::Config,
            Error::InsufficientData(_)
            | Error::InputShape(_)
            | Error::AugmentationConflict(_)
            | Error::EmptyBatch
            | Error::InvalidPartition(_)
            | Error::InvalidClass { .. }
            | Error::Io { .. } => Category::Data,
            Error::CheckpointFormat(_) => Category::Checkpoint,
            Error::Mask(_) => Category::Mask,
            Error::Comparison(_) => Category::Other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
