use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label {label} at index {index} out of range for {num_classes} classes")]
    Label {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("backward called on a spent trace; run a new forward pass first")]
    StaleCache,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ring of {nodes} nodes is too small for the neighboring relation (need at least 3)")]
    RingTooSmall { nodes: usize },

    #[error("cannot coarsen {nodes} nodes with stride {stride}")]
    Coarsen { nodes: usize, stride: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("invalid record {index} ({id}): {message}")]
    Record {
        index: usize,
        id: String,
        message: String,
    },

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
