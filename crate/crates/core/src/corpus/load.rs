use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::adapter::CorpusAdapter;
use super::{SplitTag, StanceExample};
use crate::types::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// A record that was rejected while loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub line: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "line {}", self.line)?;
        if let Some(field) = &self.field {
            write!(f, " field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    Missing(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(Diagnostic),
}

/// Validated examples plus one diagnostic per rejected record.
#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub examples: Vec<StanceExample>,
    pub diagnostics: Vec<Diagnostic>,
}

impl LoadedCorpus {
    /// Fails on the first rejected record instead of skipping it.
    pub fn into_strict(self) -> Result<Vec<StanceExample>, CorpusError> {
        match self.diagnostics.into_iter().next() {
            Some(d) => Err(CorpusError::InvalidRecord(d)),
            None => Ok(self.examples),
        }
    }
}

/// Loads and validates a corpus file. Invalid records are skipped and reported in
/// [`LoadedCorpus::diagnostics`]; input order is preserved.
pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    adapter: &CorpusAdapter,
) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let file = open(path)?;
    load_corpus_from_reader(file, format, adapter, None)
}

/// Loads an upstream release directory holding `train.jsonl`, `valid.jsonl` and
/// `test.jsonl`. Records without a split value take the split implied by their file.
pub fn load_corpus_dir(
    dir: impl AsRef<Path>,
    adapter: &CorpusAdapter,
) -> Result<LoadedCorpus, CorpusError> {
    let dir = dir.as_ref();
    let mut out = LoadedCorpus::default();
    for (name, default_split) in [
        ("train.jsonl", Some(SplitTag::Train)),
        ("valid.jsonl", Some(SplitTag::Validation)),
        ("test.jsonl", None),
    ] {
        let path = dir.join(name);
        let mut part =
            load_corpus_from_reader(open(&path)?, CorpusFormat::Jsonl, adapter, default_split)?;
        for d in &mut part.diagnostics {
            d.file = Some(name.to_string());
        }
        out.examples.append(&mut part.examples);
        out.diagnostics.append(&mut part.diagnostics);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CorpusError::Missing(path.display().to_string())
        } else {
            CorpusError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })
}

pub fn load_corpus_from_reader<R: Read>(
    reader: R,
    format: CorpusFormat,
    adapter: &CorpusAdapter,
    default_split: Option<SplitTag>,
) -> Result<LoadedCorpus, CorpusError> {
    match format {
        CorpusFormat::Jsonl => load_jsonl(reader, adapter, default_split),
        CorpusFormat::Csv => load_csv(reader, adapter, default_split),
    }
}

fn load_jsonl<R: Read>(
    reader: R,
    adapter: &CorpusAdapter,
    default_split: Option<SplitTag>,
) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: format!("invalid JSON: {e}"),
        })?;
        let Value::Object(obj) = value else {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "record must be a JSON object".into(),
            });
        };
        let get = |key: &str| -> Option<String> {
            match obj.get(key)? {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                Value::Bool(b) => Some(b.to_string()),
                _ => None,
            }
        };
        match build_example(get, adapter, default_split) {
            Ok(e) => out.examples.push(e),
            Err((field, message)) => out.diagnostics.push(Diagnostic {
                file: None,
                line: line_no,
                field,
                message,
            }),
        }
    }
    Ok(out)
}

fn load_csv<R: Read>(
    reader: R,
    adapter: &CorpusAdapter,
    default_split: Option<SplitTag>,
) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    // empty input has no header row
    if headers.is_empty() {
        return Ok(out);
    }
    for row in rdr.records() {
        let row = row.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line_no = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |key: &str| -> Option<String> {
            let idx = headers.iter().position(|h| h == key)?;
            row.get(idx).map(str::to_string)
        };
        match build_example(get, adapter, default_split) {
            Ok(e) => out.examples.push(e),
            Err((field, message)) => out.diagnostics.push(Diagnostic {
                file: None,
                line: line_no,
                field,
                message,
            }),
        }
    }
    Ok(out)
}

type RecordError = (Option<String>, String);

fn build_example(
    get: impl Fn(&str) -> Option<String>,
    adapter: &CorpusAdapter,
    default_split: Option<SplitTag>,
) -> Result<StanceExample, RecordError> {
    let f = &adapter.fields;
    let required = |key: &str| -> Result<String, RecordError> {
        get(key).ok_or_else(|| (Some(key.to_string()), "missing field".to_string()))
    };
    let non_empty = |key: &str| -> Result<String, RecordError> {
        let v = required(key)?;
        if v.trim().is_empty() {
            Err((
                Some(key.to_string()),
                "empty after trimming whitespace".into(),
            ))
        } else {
            Ok(v)
        }
    };

    let id = non_empty(&f.id)?;
    let question = non_empty(&f.question)?;
    let comment = non_empty(&f.comment)?;
    let raw_label = required(&f.label)?;
    let label = adapter.parse_label(&raw_label).ok_or_else(|| {
        (
            Some(f.label.clone()),
            format!("unknown label `{raw_label}`"),
        )
    })?;
    let language: Language = required(&f.language)?
        .parse()
        .map_err(|e: crate::types::UnknownLanguage| (Some(f.language.clone()), e.to_string()))?;
    let question_id = non_empty(&f.question_id)?;
    let topic = get(&f.topic).filter(|t| !t.trim().is_empty());
    let split = match get(&f.split).filter(|s| !s.trim().is_empty()) {
        Some(raw) => Some(
            raw.parse::<SplitTag>()
                .map_err(|e| (Some(f.split.clone()), e.to_string()))?,
        ),
        None => default_split,
    };

    Ok(StanceExample {
        id,
        question,
        comment,
        label,
        language,
        topic,
        question_id,
        split,
    })
}
