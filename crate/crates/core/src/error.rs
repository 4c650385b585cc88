use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not numerically positive definite (pivot {pivot})")]
    SingularMatrix { pivot: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("worker {worker} failed: {message}")]
    WorkerFailed { worker: usize, message: String },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn mismatch(
    op: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
