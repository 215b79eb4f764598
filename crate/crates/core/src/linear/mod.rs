//! Linear stance classifiers over hashed bag-of-words features, plus the subword
//! bag-of-n-grams classifier.

pub mod calibration;
pub mod hashing;
pub mod model;
pub mod persist;
mod solvers;
pub mod subword;

pub use calibration::PlattCalibration;
pub use hashing::{featurize, murmur3_32, token_bucket, HashedFeatureVector};
pub use model::{
    train_linear, LinearConfig, LinearKind, LinearStanceModel, SolverReport, DEFAULT_HASH_DIMENSION,
};
pub use persist::{peek_kind, PersistError};
pub use subword::{train_subword, EpochLog, SubwordConfig, SubwordLinearModel};

use crate::types::StanceLabel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set only contains {0:?} examples")]
    SingleClass(StanceLabel),
    #[error("invalid config: {0}")]
    Config(String),
}
