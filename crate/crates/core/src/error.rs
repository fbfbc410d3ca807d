use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CdmError {
    #[error("{}: file not found", .0.display())]
    NotFound(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no logs")]
    NoLogs,

    #[error("dataset exhausted by filters")]
    Exhausted,

    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },

    #[error("backward requires a scalar root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("no identical-response pairs; run shadow augmentation")]
    NoIdenticalPairs,

    #[error("no question has a defined degree of consistency")]
    NoDefinedDoc,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("REO undefined: training-set DOC is zero")]
    ZeroTrainDoc,

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint holds model kind `{found}`, expected `{expected}`")]
    KindMismatch { found: String, expected: String },

    #[error("unknown model kind `{0}`")]
    UnknownModel(String),

    #[error("config: {0}")]
    Config(String),
}

impl CdmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CdmError::NotFound(path)
        } else {
            CdmError::Io { path, source }
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        CdmError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CdmError>;
