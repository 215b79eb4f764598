use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use stance_core::{PredictionError, StanceClassifier, StancePrediction};

use crate::bert::{Bert, LABELS};
use crate::config::{BertConfig, EncoderConfig};
use crate::tokenizer::{Encoding, WordPieceTokenizer};
use crate::train::EncoderEpochLog;
use crate::EncoderError;

pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const BERT_CONFIG_FILE: &str = "config.json";
pub const ENCODER_CONFIG_FILE: &str = "encoder_config.json";
pub const LOG_FILE: &str = "training_log.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const MANIFEST_FILE: &str = "stance_model.json";

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    format_version: u32,
    labels: Vec<String>,
    lowercase: bool,
}

/// A fine-tuned encoder with its tokenizer, hyperparameters and training log.
#[derive(Debug)]
pub struct EncoderStanceModel {
    pub(crate) bert: Bert,
    tokenizer: WordPieceTokenizer,
    config: EncoderConfig,
    pub(crate) training_log: Vec<EncoderEpochLog>,
}

/// Right-pads encodings into `(input_ids, token_type_ids, attention_mask)`.
pub(crate) fn batch_tensors(
    encodings: &[&Encoding],
    pad_id: u32,
) -> Result<(Tensor, Tensor, Tensor), EncoderError> {
    let len = encodings.iter().map(|e| e.len()).max().unwrap_or(0);
    let n = encodings.len();
    let mut ids = Vec::with_capacity(n * len);
    let mut types = Vec::with_capacity(n * len);
    let mut mask = Vec::with_capacity(n * len);
    for e in encodings {
        let pad = len - e.len();
        ids.extend(&e.input_ids);
        ids.extend(std::iter::repeat_n(pad_id, pad));
        types.extend(&e.token_type_ids);
        types.extend(std::iter::repeat_n(0u32, pad));
        mask.extend(std::iter::repeat_n(1f32, e.len()));
        mask.extend(std::iter::repeat_n(0f32, pad));
    }
    let dev = Device::Cpu;
    Ok((
        Tensor::from_vec(ids, (n, len), &dev)?,
        Tensor::from_vec(types, (n, len), &dev)?,
        Tensor::from_vec(mask, (n, len), &dev)?,
    ))
}

impl EncoderStanceModel {
    pub fn new(
        bert: Bert,
        tokenizer: WordPieceTokenizer,
        config: EncoderConfig,
    ) -> Result<Self, EncoderError> {
        config.validate(Some(bert.config()))?;
        if tokenizer.vocab_size() > bert.config().vocab_size {
            return Err(EncoderError::Config(format!(
                "vocab_size: tokenizer has {} tokens, model only {}",
                tokenizer.vocab_size(),
                bert.config().vocab_size
            )));
        }
        Ok(EncoderStanceModel {
            bert,
            tokenizer,
            config,
            training_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn bert_config(&self) -> &BertConfig {
        self.bert.config()
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.tokenizer
    }

    pub fn training_log(&self) -> &[EncoderEpochLog] {
        &self.training_log
    }

    pub fn labels(&self) -> [&'static str; 2] {
        LABELS
    }

    pub fn encode(&self, question: &str, comment: &str) -> Encoding {
        self.tokenizer
            .encode_pair(question, comment, self.config.max_sequence_length)
    }

    /// Logits in (AGAINST, FAVOR) order.
    ///
    /// Every sequence gets its own forward pass. The CPU matmul kernels round differently
    /// depending on how many rows they are given, so sharing a pass with other inputs
    /// would make a pair's output depend on its batch.
    pub fn logits(&self, encodings: &[Encoding]) -> Result<Vec<[f32; 2]>, EncoderError> {
        encodings
            .iter()
            .map(|e| {
                let (ids, types, mask) = batch_tensors(&[e], self.tokenizer.pad_id())?;
                let row = self
                    .bert
                    .forward(&ids, &types, &mask, false, None)?
                    .to_vec2::<f32>()?;
                Ok([row[0][0], row[0][1]])
            })
            .collect()
    }

    pub(crate) fn predict_encoded(
        &self,
        encodings: &[Encoding],
    ) -> Result<Vec<StancePrediction>, EncoderError> {
        Ok(self
            .logits(encodings)?
            .into_iter()
            .map(|[a, f]| StancePrediction::from_logits(a as f64, f as f64))
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<(), EncoderError> {
        std::fs::create_dir_all(dir)?;
        let weights: HashMap<String, Tensor> = self.bert.snapshot()?;
        candle_core::safetensors::save(&weights, dir.join(WEIGHTS_FILE))?;
        std::fs::write(
            dir.join(BERT_CONFIG_FILE),
            serde_json::to_string_pretty(self.bert.config())?,
        )?;
        std::fs::write(
            dir.join(ENCODER_CONFIG_FILE),
            serde_json::to_string_pretty(&self.config)?,
        )?;
        self.tokenizer.save_vocab(&dir.join(VOCAB_FILE))?;
        let mut log = std::io::BufWriter::new(std::fs::File::create(dir.join(LOG_FILE))?);
        for entry in &self.training_log {
            writeln!(log, "{}", serde_json::to_string(entry)?)?;
        }
        log.flush()?;
        let manifest = Manifest {
            kind: "encoder".into(),
            format_version: FORMAT_VERSION,
            labels: LABELS.iter().map(|s| s.to_string()).collect(),
            lowercase: self.tokenizer.lowercase(),
        };
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    /// Whether `dir` looks like a saved encoder model.
    pub fn is_model_dir(dir: &Path) -> bool {
        dir.join(MANIFEST_FILE).is_file()
    }

    pub fn load(dir: &Path) -> Result<Self, EncoderError> {
        let manifest: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.kind != "encoder" || manifest.format_version != FORMAT_VERSION {
            return Err(EncoderError::Config(format!(
                "{}: unsupported model kind `{}` version {}",
                dir.display(),
                manifest.kind,
                manifest.format_version
            )));
        }
        if manifest.labels != LABELS {
            return Err(EncoderError::Config(format!(
                "labels: expected {LABELS:?}, found {:?}",
                manifest.labels
            )));
        }
        let bert_config = BertConfig::from_path(&dir.join(BERT_CONFIG_FILE))?;
        let config: EncoderConfig =
            serde_json::from_str(&std::fs::read_to_string(dir.join(ENCODER_CONFIG_FILE))?)?;
        let tokenizer =
            WordPieceTokenizer::from_vocab_file(&dir.join(VOCAB_FILE), manifest.lowercase)?;
        let tensors = candle_core::safetensors::load(dir.join(WEIGHTS_FILE), &Device::Cpu)?
            .into_iter()
            .map(|(k, v)| Ok((k, v.to_dtype(DType::F32)?)))
            .collect::<Result<HashMap<_, _>, candle_core::Error>>()?;
        let expected = tensors.len();
        let bert = Bert::from_tensors(&bert_config, tensors, 0)?;
        if bert.vars().len() != expected {
            return Err(EncoderError::Config(
                "weights file does not match the architecture".into(),
            ));
        }
        let mut model = Self::new(bert, tokenizer, config)?;
        let log_path = dir.join(LOG_FILE);
        if log_path.is_file() {
            for line in BufReader::new(std::fs::File::open(log_path)?).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    model.training_log.push(serde_json::from_str(&line)?);
                }
            }
        }
        Ok(model)
    }
}

impl StanceClassifier for EncoderStanceModel {
    fn model_id(&self) -> String {
        format!("encoder:{}", self.config.pretrained_model_id)
    }

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        let enc = self.encode(question, comment);
        Ok(self.predict_encoded(std::slice::from_ref(&enc))?[0])
    }

    fn predict_batch(
        &self,
        pairs: &[(&str, &str)],
    ) -> Result<Vec<StancePrediction>, PredictionError> {
        let encs: Vec<Encoding> = pairs.iter().map(|(q, c)| self.encode(q, c)).collect();
        Ok(self.predict_encoded(&encs)?)
    }
}
