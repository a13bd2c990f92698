use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the bottleneck pipeline.
#[derive(Debug, Error)]
pub enum AlbmError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("degenerate (zero-norm) embedding at class {class}, attribute {attribute}")]
    DegenerateEmbedding { class: usize, attribute: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("attribute set is empty")]
    EmptyAttributeSet,

    #[error("duplicate attribute name {0:?}")]
    DuplicateAttribute(String),

    #[error("LLM transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("no recorded fixture for request {hash}")]
    MissingFixture { hash: String },

    #[error("could not parse LLM output ({reason}): {raw:?}")]
    Parse { reason: String, raw: String },

    #[error("class {class:?}: LLM labeled {labels} concept(s) but {concepts} were given")]
    Consistency {
        class: String,
        concepts: usize,
        labels: usize,
    },

    #[error("attribute groups do not partition the input (invented: {invented:?}, dropped: {dropped:?}, repeated: {repeated:?})")]
    PartitionViolation {
        invented: Vec<String>,
        dropped: Vec<String>,
        repeated: Vec<String>,
    },

    #[error("supplement for class {class:?}, attribute {attribute:?} still empty after {attempts} attempt(s)")]
    SupplementFailed {
        class: String,
        attribute: String,
        attempts: u32,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("label {label} outside class range 0..{classes}")]
    Label { label: usize, classes: usize },

    #[error("checksum mismatch for {path}: manifest {expected}, payload {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AlbmError {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        AlbmError::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AlbmError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than
    /// numerical failure or the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            AlbmError::Divergence { .. }
                | AlbmError::Io { .. }
                | AlbmError::Transport { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, AlbmError>;
