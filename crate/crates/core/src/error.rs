use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate bounding box: {0}")]
    DegenerateBox(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("frame {got} presented after frame {last}; frames must strictly increase")]
    OutOfOrderFrame { last: u64, got: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
