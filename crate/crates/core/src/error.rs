use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The noise model does not provide what the operation needs
    /// (for instance a scalar latent factor).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    /// The noise model itself is invalid (bad parameters, factorization failure).
    #[error("model error: {0}")]
    Model(String),
    /// Incompatible procedure / model / parameter combination.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed input data.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical routine failed to converge or lost its certificate.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::UnsupportedModel(msg.into())
    }
}
