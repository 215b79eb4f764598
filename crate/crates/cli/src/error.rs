use stance_core::booklet::BookletError;
use stance_core::corpus::{AdapterError, CorpusError, PartitionError};
use stance_core::evaluation::EvalError;
use stance_core::linear::{PersistError, TrainError};
use stance_core::PredictionError;
use stance_encoder::EncoderError;

/// Command failure, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// bad flags or configuration (exit 1)
    #[error("{0}")]
    Usage(String),
    /// unreadable or invalid input data (exit 2)
    #[error("{0}")]
    Data(String),
    /// model missing, unloadable, or failing (exit 3)
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Model(_) => 3,
        }
    }

    pub fn io(what: &str, path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("cannot {what} {}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<BookletError> for CliError {
    fn from(e: BookletError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        match e {
            PartitionError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(format!("cannot partition corpus: {e}")),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Config(_) => CliError::Usage(e.to_string()),
            EncoderError::EmptyTrainingSet => CliError::Data(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<PredictionError> for CliError {
    fn from(e: PredictionError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Prediction(p) => CliError::Model(p.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
