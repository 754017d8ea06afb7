use std::path::Path;

use readinfo::bayes_channel::ChannelError;
use readinfo::effect_model::FitError;
use readinfo::reading_sim::SimError;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::MissingValue { .. } | FitError::MixedSubjects { .. } | FitError::NonFinite { .. } => {
                CliError::Data(e.to_string())
            }
            FitError::NoPredictors | FitError::DuplicatePredictor(_) | FitError::InvalidBandwidth(_) | FitError::InvalidGrid(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UndefinedPrediction { .. } => CliError::Numerical(format!(
                "{e}; the channel carries no information about word identity. \
                 Raise the fidelity above chance or set phi >= H(W)"
            )),
            SimError::ImpossibleEvidence(_) | SimError::Budget { .. } => CliError::Numerical(e.to_string()),
            SimError::UnknownWord(_) | SimError::LexiconMismatch | SimError::UnknownSymbol(_) => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::InvalidPosterior { .. } | ChannelError::NonPositiveLikelihood(_) => CliError::Numerical(e.to_string()),
            ChannelError::LikelihoodMap(_) | ChannelError::NoVariants => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
