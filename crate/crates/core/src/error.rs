use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// A dense matrix was not constant on one of the `(s, t, u)` orbits.
    #[error("matrix is not in the orbit algebra: orbit (s={s}, t={t}, u={u}) varies by {spread:e}")]
    NotInAlgebra { s: usize, t: usize, u: usize, spread: f64 },

    /// The Gaussian draw produced `|e^T w|` too small to normalise by.
    #[error("degenerate draw: |e^T w| = {0:e}")]
    DegenerateDraw(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
