use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("quadrature supports at most {max} players (got {n}); use Monte Carlo instead")]
    TooManyPlayers { n: usize, max: usize },

    #[error("score function undefined for {0}")]
    ScoreUndefined(String),

    #[error("no sign change of the gradient in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("empty horizon: at least one step is required")]
    EmptyHorizon,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
