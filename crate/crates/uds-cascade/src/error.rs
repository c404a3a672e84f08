use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Malformed input file (CoNLL-U, JSONL, config).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A domain invariant does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    /// Shape mismatch in a tensor operation.
    #[error("dimension error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    /// A cascade stage failed; the stage name is attached.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
