//! Multilingual BERT fine-tuned as a binary stance classifier.

pub mod bert;
pub mod config;
pub mod model;
pub mod tokenizer;
pub mod train;
pub mod weights;

pub use config::{BertConfig, EncoderConfig};
pub use model::EncoderStanceModel;
pub use tokenizer::WordPieceTokenizer;
pub use train::{fine_tune, fine_tune_checkpoint, EncoderEpochLog};
pub use weights::{load_checkpoint, Checkpoint, Downloader, LocalWeights, WeightSource};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("tensor error: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("pretrained model `{id}` unavailable: {reason}")]
    PretrainedUnavailable { id: String, reason: String },
    #[error("checkpoint lacks weight `{0}`")]
    MissingWeight(String),
    #[error("weight `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("out of memory with batch size {batch_size}; try a smaller batch_size")]
    OutOfMemory { batch_size: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training diverged: loss is not finite at step {0}")]
    Diverged(usize),
}

impl From<EncoderError> for stance_core::PredictionError {
    fn from(e: EncoderError) -> Self {
        stance_core::PredictionError(e.to_string())
    }
}
