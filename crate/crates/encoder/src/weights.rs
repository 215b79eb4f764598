//! Locating and reading pretrained checkpoints.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};

use crate::config::BertConfig;
use crate::tokenizer::{build_vocab, WordPieceTokenizer};
use crate::EncoderError;

/// Environment variable naming the checkpoint cache directory.
pub const CACHE_ENV: &str = "STANCE_MODEL_CACHE";

/// Fetches a checkpoint into a directory. Implementations must leave `config.json`,
/// `vocab.txt` and `model.safetensors` or `pytorch_model.bin` in `dest`.
pub trait Downloader: Send + Sync {
    fn fetch(&self, model_id: &str, dest: &Path) -> Result<(), EncoderError>;
}

/// Resolves a model identifier to a checkpoint directory.
pub trait WeightSource {
    fn resolve(&self, model_id: &str) -> Result<PathBuf, EncoderError>;
}

/// Looks for checkpoints as literal paths, then in a cache directory, then asks an
/// optional downloader to fill the cache.
pub struct LocalWeights {
    pub cache_dir: PathBuf,
    pub downloader: Option<Box<dyn Downloader>>,
}

impl LocalWeights {
    pub fn new(cache_dir: impl Into<PathBuf>) -> Self {
        LocalWeights {
            cache_dir: cache_dir.into(),
            downloader: None,
        }
    }

    /// Cache at `$STANCE_MODEL_CACHE`, else `$HOME/.cache/stance-models`.
    pub fn from_env() -> Self {
        let dir = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| {
                std::env::var_os("HOME").map(|h| Path::new(&h).join(".cache/stance-models"))
            })
            .unwrap_or_else(|| PathBuf::from(".stance-models"));
        Self::new(dir)
    }

    pub fn with_downloader(mut self, d: Box<dyn Downloader>) -> Self {
        self.downloader = Some(d);
        self
    }

    pub fn cache_path(&self, model_id: &str) -> PathBuf {
        self.cache_dir.join(model_id.replace('/', "--"))
    }
}

fn is_checkpoint(dir: &Path) -> bool {
    dir.join("config.json").is_file()
        && dir.join("vocab.txt").is_file()
        && (dir.join("model.safetensors").is_file() || dir.join("pytorch_model.bin").is_file())
}

impl WeightSource for LocalWeights {
    fn resolve(&self, model_id: &str) -> Result<PathBuf, EncoderError> {
        let literal = Path::new(model_id);
        if literal.is_dir() {
            return if is_checkpoint(literal) {
                Ok(literal.to_path_buf())
            } else {
                Err(EncoderError::PretrainedUnavailable {
                    id: model_id.into(),
                    reason: "directory lacks config.json, vocab.txt or weights".into(),
                })
            };
        }
        let cached = self.cache_path(model_id);
        if is_checkpoint(&cached) {
            return Ok(cached);
        }
        match &self.downloader {
            Some(d) => {
                std::fs::create_dir_all(&cached)?;
                d.fetch(model_id, &cached)?;
                if is_checkpoint(&cached) {
                    Ok(cached)
                } else {
                    Err(EncoderError::PretrainedUnavailable {
                        id: model_id.into(),
                        reason: format!(
                            "download left an incomplete checkpoint in {}",
                            cached.display()
                        ),
                    })
                }
            }
            None => Err(EncoderError::PretrainedUnavailable {
                id: model_id.into(),
                reason: format!(
                    "not a checkpoint directory and not cached at {} (set {CACHE_ENV})",
                    cached.display()
                ),
            }),
        }
    }
}

/// Everything read from a checkpoint directory.
pub struct Checkpoint {
    pub config: BertConfig,
    pub tensors: HashMap<String, Tensor>,
    pub tokenizer: WordPieceTokenizer,
}

impl Checkpoint {
    /// Untrained encoder with a vocabulary built from `texts`; weights are drawn from the
    /// fine-tuning seed.
    pub fn from_scratch<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        lowercase: bool,
        architecture: impl FnOnce(usize) -> BertConfig,
    ) -> Result<Self, EncoderError> {
        let tokenizer = WordPieceTokenizer::from_tokens(build_vocab(texts, lowercase), lowercase)?;
        Ok(Checkpoint {
            config: architecture(tokenizer.vocab_size()),
            tensors: HashMap::new(),
            tokenizer,
        })
    }
}

/// Lowercasing flag: explicit override, then `tokenizer_config.json`, then the id.
pub fn detect_lowercase(dir: &Path, model_id: &str, explicit: Option<bool>) -> bool {
    if let Some(b) = explicit {
        return b;
    }
    let from_file = std::fs::read_to_string(dir.join("tokenizer_config.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v.get("do_lower_case").and_then(|b| b.as_bool()));
    from_file.unwrap_or_else(|| model_id.contains("uncased"))
}

pub fn read_tensors(dir: &Path) -> Result<HashMap<String, Tensor>, EncoderError> {
    let st = dir.join("model.safetensors");
    if st.is_file() {
        return Ok(candle_core::safetensors::load(&st, &Device::Cpu)?);
    }
    let bin = dir.join("pytorch_model.bin");
    Ok(candle_core::pickle::read_all(&bin)?.into_iter().collect())
}

pub fn load_checkpoint(
    source: &dyn WeightSource,
    model_id: &str,
    lowercase: Option<bool>,
) -> Result<Checkpoint, EncoderError> {
    let dir = source.resolve(model_id)?;
    let config = BertConfig::from_path(&dir.join("config.json"))?;
    let lower = detect_lowercase(&dir, model_id, lowercase);
    let tokenizer = WordPieceTokenizer::from_vocab_file(&dir.join("vocab.txt"), lower)?;
    if tokenizer.vocab_size() != config.vocab_size {
        return Err(EncoderError::Config(format!(
            "vocab_size: config says {}, vocab.txt has {} tokens",
            config.vocab_size,
            tokenizer.vocab_size()
        )));
    }
    let tensors = read_tensors(&dir)?;
    Ok(Checkpoint {
        config,
        tensors,
        tokenizer,
    })
}
