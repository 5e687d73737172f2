use thiserror::Error;

use crate::estimators::EstimateError;
use crate::ingest::IngestError;
use crate::normality::NormalityError;
use crate::portfolio::PortfolioError;
use crate::riskmodel::RiskError;
use crate::simulate::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error over every module's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Normality(#[from] NormalityError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
}

impl Error {
    /// Stable variant name, printed by the CLI on failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Ingest(e) => e.name(),
            Error::Estimate(e) => e.name(),
            Error::Normality(e) => e.name(),
            Error::Risk(e) => e.name(),
            Error::Portfolio(e) => e.name(),
            Error::Sim(e) => e.name(),
            Error::Io { .. } => "Io",
            Error::Artifact { .. } => "MalformedArtifact",
        }
    }
}
