//! Pipeline configuration file (TOML) and its hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stance_core::booklet::{SigmaMode, SigmaScope};
use stance_core::corpus::{CorpusFormat, PartitionConfig};
use stance_core::evaluation::MeanMode;
use stance_core::linear::{LinearConfig, SubwordConfig};
use stance_core::Language;
use stance_encoder::EncoderConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ridge,
    Svm,
    Subword,
    Encoder,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::Svm => "svm",
            ModelKind::Subword => "subword",
            ModelKind::Encoder => "encoder",
        }
    }
}

/// How the encoder is initialized before fine-tuning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderInit {
    /// load `encoder.pretrained_model_id`
    #[default]
    Pretrained,
    /// a small randomly initialized encoder with a vocabulary built from the training data
    ScratchTiny,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    /// provided split tags when every record has one, derived partitions otherwise
    #[default]
    Auto,
    Provided,
    Derive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// JSONL/CSV file, or a directory with train.jsonl, valid.jsonl and test.jsonl
    pub corpus: Option<PathBuf>,
    pub booklet: Option<PathBuf>,
    pub model_store: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: None,
            booklet: None,
            model_store: PathBuf::from("models"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// guessed from the extension when absent
    pub format: Option<CorpusFormat>,
    /// TOML field mapping for foreign layouts
    pub adapter: Option<PathBuf>,
    pub partition: PartitionChoice,
    pub derive: PartitionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub linear: LinearConfig,
    pub subword: SubwordConfig,
    pub encoder: EncoderConfig,
    pub encoder_init: EncoderInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Ridge,
            linear: LinearConfig::default(),
            subword: SubwordConfig::default(),
            encoder: EncoderConfig::default(),
            encoder_init: EncoderInit::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sigma_mode: SigmaMode,
    pub sigma_scope: SigmaScope,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub mean: MeanMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// seeds every stochastic component: partitioning, solvers, shuffles, initialization
    pub seed: u64,
    /// restricts evaluation and analysis to one language; `None` means all
    pub language: Option<Language>,
    pub paths: PathsConfig,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub analysis: AnalysisConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            language: None,
            paths: PathsConfig::default(),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            analysis: AnalysisConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

fn parse(text: &str, what: &str) -> Result<PipelineConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let key = e.span().and_then(|s| key_at(text, s.start));
        let field = key.map(|k| format!(" field `{k}`:")).unwrap_or_default();
        CliError::Usage(format!("invalid {what}:{field} {}", e.message()))
    })
}

/// Dotted key of the `key = value` line containing byte `offset`, if any.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let start = text[..offset.min(text.len())]
        .rfind('\n')
        .map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    let key = key.trim();
    if key.is_empty() || key.starts_with('[') {
        return None;
    }
    let table = text[..start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    Some(match table {
        Some(t) => format!("{t}.{key}"),
        None => key.to_string(),
    })
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        parse(text, "config")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        parse(&text, &format!("config {}", path.display()))
    }

    /// Copies the top-level seed into every component.
    pub fn propagate_seed(&mut self) {
        self.model.linear.seed = self.seed;
        self.model.subword.seed = self.seed;
        self.model.encoder.seed = self.seed;
        self.corpus.derive.seed = self.seed;
    }

    /// Checks the hyperparameters of the selected model kind.
    pub fn validate(&self) -> Result<(), CliError> {
        match self.model.kind {
            ModelKind::Ridge | ModelKind::Svm => self.model.linear.validate()?,
            ModelKind::Subword => self.model.subword.validate()?,
            ModelKind::Encoder => self
                .model
                .encoder
                .validate(None)
                .map_err(|e| CliError::Usage(format!("encoder.{e}")))?,
        }
        Ok(())
    }

    /// SHA-256 over the settings that determine results. Output locations are left out,
    /// so writing the same run elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        c.paths.model_store = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Default artifact location for `kind` inside the model store.
    pub fn default_model_path(&self, kind: ModelKind) -> PathBuf {
        match kind {
            ModelKind::Encoder => self.paths.model_store.join("encoder"),
            k => self.paths.model_store.join(format!("{}.model", k.as_str())),
        }
    }
}
