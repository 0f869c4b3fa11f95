use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid storage-type catalog: {0}")]
    Catalog(String),

    #[error("invalid scenario set: {0}")]
    Scenario(String),

    /// Internal-consistency failure of the three-class structure or the
    /// price-difference region. Indicates a bug rather than bad input.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("user {user}: {msg}")]
    Pricing { user: String, msg: String },

    #[error("oracle budget exceeded: {evaluations} evaluations > budget {budget}")]
    OracleBudget { evaluations: u128, budget: u128 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
