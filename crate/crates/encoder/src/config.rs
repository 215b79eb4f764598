use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::EncoderError;

/// Architecture hyperparameters in the layout of a Hugging Face `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub hidden_act: String,
    pub hidden_dropout_prob: f64,
    pub attention_probs_dropout_prob: f64,
    pub max_position_embeddings: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    pub initializer_range: f64,
    #[serde(default = "default_model_type")]
    pub model_type: String,
}

fn default_model_type() -> String {
    "bert".to_string()
}

impl Default for BertConfig {
    fn default() -> Self {
        BertConfig {
            vocab_size: 30522,
            hidden_size: 768,
            num_hidden_layers: 12,
            num_attention_heads: 12,
            intermediate_size: 3072,
            hidden_act: "gelu".to_string(),
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            max_position_embeddings: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            initializer_range: 0.02,
            model_type: default_model_type(),
        }
    }
}

impl BertConfig {
    pub fn from_path(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: BertConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.model_type != "bert" {
            return Err(EncoderError::Config(format!(
                "model_type: only `bert` checkpoints are supported, found `{}`",
                self.model_type
            )));
        }
        if self.num_attention_heads == 0 || self.hidden_size % self.num_attention_heads != 0 {
            return Err(EncoderError::Config(
                "num_attention_heads: must divide hidden_size".into(),
            ));
        }
        match self.hidden_act.as_str() {
            "gelu" | "gelu_new" | "relu" => Ok(()),
            other => Err(EncoderError::Config(format!(
                "hidden_act: unsupported `{other}`"
            ))),
        }
    }

    /// A few-kilobyte model for tests and smoke runs.
    pub fn tiny(vocab_size: usize) -> Self {
        BertConfig {
            vocab_size,
            hidden_size: 32,
            num_hidden_layers: 2,
            num_attention_heads: 4,
            intermediate_size: 64,
            max_position_embeddings: 128,
            ..BertConfig::default()
        }
    }
}

/// Fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// identifier resolved by a [`crate::WeightSource`]: a local directory or a hub id
    pub pretrained_model_id: String,
    pub max_sequence_length: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// share of all optimizer steps spent on linear warmup
    pub warmup_ratio: f64,
    /// AdamW decay; biases and layer norms are never decayed
    pub weight_decay: f64,
    /// global gradient norm clip; 0 disables clipping
    pub max_grad_norm: f64,
    pub seed: u64,
    /// lowercase and strip accents before WordPiece; `None` reads the checkpoint's
    /// tokenizer_config.json, falling back to whether the id contains "uncased"
    pub lowercase: Option<bool>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            pretrained_model_id: "bert-base-multilingual-uncased".to_string(),
            max_sequence_length: 512,
            learning_rate: 5e-5,
            batch_size: 16,
            epochs: 3,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            max_grad_norm: 1.0,
            seed: 42,
            lowercase: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self, bert: Option<&BertConfig>) -> Result<(), EncoderError> {
        let bad = |field: &str, msg: String| Err(EncoderError::Config(format!("{field}: {msg}")));
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio", "must be in [0, 1]".into());
        }
        if self.weight_decay < 0.0 || self.max_grad_norm < 0.0 {
            return bad(
                "weight_decay",
                "and max_grad_norm must be non-negative".into(),
            );
        }
        // [CLS] q [SEP] c [SEP] needs room for at least one question token
        if self.max_sequence_length < 4 {
            return bad("max_sequence_length", "must be at least 4".into());
        }
        if let Some(b) = bert {
            if self.max_sequence_length > b.max_position_embeddings {
                return bad(
                    "max_sequence_length",
                    format!("exceeds the model limit of {}", b.max_position_embeddings),
                );
            }
        }
        Ok(())
    }
}
