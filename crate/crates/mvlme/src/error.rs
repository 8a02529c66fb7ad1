use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Invalid spline configuration (degrees of freedom, knots, bounds).
    #[error("spline error: {0}")]
    Spline(String),

    /// Dataset violates a structural invariant.
    #[error("data error: {0}")]
    Data(String),

    /// Model specification or configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Dimension mismatch between parameters and designs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear-algebra routine failed (typically a Cholesky factorization
    /// of a conditional precision that is not positive definite).
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    /// Numerical failure inside an MCMC sweep; carries the sweep index.
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// Diagnostics called on degenerate input (single chain, constant draws).
    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    TomlParse(#[from] toml::de::Error),

    #[error("toml serialize error: {0}")]
    TomlSerialize(#[from] toml::ser::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn spline(msg: impl Into<String>) -> Self {
        Error::Spline(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn linalg(msg: impl Into<String>) -> Self {
        Error::LinearAlgebra(msg.into())
    }

    pub(crate) fn diagnostics(msg: impl Into<String>) -> Self {
        Error::Diagnostics(msg.into())
    }
}
