use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape mismatch, out-of-range index, or otherwise invalid input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numerical routine could not produce a finite answer.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A forward or backward pass produced a non-finite value.
    #[error("non-finite value produced in layer {layer}")]
    NonFinite { layer: usize },

    /// Training was aborted; `history` holds the losses recorded before the failure.
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged {
        iteration: usize,
        loss: f64,
        history: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Whether this error stems from bad input rather than a numerical problem.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Json(_) | Error::Io(_))
    }
}
