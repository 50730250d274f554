use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A covariance or normal-equation matrix could not be factorized.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A query point lies outside the region it was asked about.
    #[error("domain error: {0}")]
    Domain(String),

    /// SPVT produced an unusable partition.
    #[error("partition build failed: {0}")]
    Build(String),

    /// Poisson-disk thinning could not place the requested points.
    #[error("domain too dense: {0}")]
    TooDense(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    /// Operation is not defined for the given parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than by
    /// the computation itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
