use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::StanceLabel;

/// Source column/key name for every canonical field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldMap {
    pub id: String,
    pub question: String,
    pub comment: String,
    pub label: String,
    pub language: String,
    pub topic: String,
    pub question_id: String,
    pub split: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: "id".into(),
            question: "question".into(),
            comment: "comment".into(),
            label: "label".into(),
            language: "language".into(),
            topic: "topic".into(),
            question_id: "question_id".into(),
            split: "split".into(),
        }
    }
}

/// Maps a foreign record layout onto [`super::StanceExample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusAdapter {
    pub fields: FieldMap,
    /// Raw label values read as FAVOR (compared case-insensitively).
    pub favor_values: Vec<String>,
    /// Raw label values read as AGAINST (compared case-insensitively).
    pub against_values: Vec<String>,
}

impl Default for CorpusAdapter {
    fn default() -> Self {
        CorpusAdapter {
            fields: FieldMap::default(),
            favor_values: vec!["FAVOR".into()],
            against_values: vec!["AGAINST".into()],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("cannot read adapter config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid adapter config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl CorpusAdapter {
    /// Layout of the public x-stance release: canonical key names, with the test subset
    /// stored under `test_set` and train/valid membership given by the file name.
    pub fn xstance() -> Self {
        CorpusAdapter {
            fields: FieldMap {
                split: "test_set".into(),
                ..FieldMap::default()
            },
            ..CorpusAdapter::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, AdapterError> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, AdapterError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AdapterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn parse_label(&self, raw: &str) -> Option<StanceLabel> {
        let raw = raw.trim();
        if self
            .favor_values
            .iter()
            .any(|v| v.eq_ignore_ascii_case(raw))
        {
            Some(StanceLabel::Favor)
        } else if self
            .against_values
            .iter()
            .any(|v| v.eq_ignore_ascii_case(raw))
        {
            Some(StanceLabel::Against)
        } else {
            None
        }
    }
}
