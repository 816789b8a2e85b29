use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: empty relation set")]
    EmptySet { op: &'static str },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("unknown category `{0}`")]
    Vocabulary(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("oracle is intractable for {0} actions (limit 16)")]
    Tractability(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("verification failed: {}", .0.join(", "))]
    Verification(Vec<String>),

    #[error("training diverged at epoch {epoch}, video `{video_id}`, lr {lr:e}")]
    Diverged {
        epoch: usize,
        video_id: String,
        lr: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn dims(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 2,
            Error::Numeric(_) | Error::Diverged { .. } => 4,
            Error::Verification(_) => 5,
            _ => 3,
        }
    }
}
