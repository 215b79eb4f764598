//! Macro-F1 scoring and the per-partition, per-language benchmark table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{PartitionedDataset, StanceExample};
use crate::scalar::Real;
use crate::types::{Language, PredictionError, StanceClassifier, StanceLabel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("cannot score an empty label list")]
    Empty,
    #[error("harmonic mean is undefined when an input is zero")]
    HarmonicZero,
    #[error("score {0} is outside [0, 100]")]
    OutOfRange(f64),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
}

fn class_f1(predictions: &[StanceLabel], gold: &[StanceLabel], class: StanceLabel) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        // class absent from both lists
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the FAVOR and AGAINST F1 scores, in percent.
pub fn macro_f1<T: Real>(
    predictions: &[StanceLabel],
    gold: &[StanceLabel],
) -> Result<T, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = StanceLabel::ALL
        .iter()
        .map(|&c| class_f1(predictions, gold, c))
        .sum();
    Ok(T::of(100.0 * sum / StanceLabel::ALL.len() as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    #[default]
    Arithmetic,
    Harmonic,
}

impl std::str::FromStr for MeanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "arithmetic" => Ok(MeanMode::Arithmetic),
            "harmonic" => Ok(MeanMode::Harmonic),
            other => Err(format!(
                "unknown mean mode `{other}` (expected arithmetic or harmonic)"
            )),
        }
    }
}

pub fn combine_means<T: Real>(de: T, fr: T, mode: MeanMode) -> Result<T, EvalError> {
    let hundred = T::of(100.0);
    for x in [de, fr] {
        if !(x >= T::zero() && x <= hundred) {
            return Err(EvalError::OutOfRange(x.to_f64().unwrap_or(f64::NAN)));
        }
    }
    match mode {
        MeanMode::Arithmetic => Ok((de + fr) / T::of(2.0)),
        MeanMode::Harmonic => {
            if de == T::zero() || fr == T::zero() {
                Err(EvalError::HarmonicZero)
            } else {
                Ok(T::of(2.0) * de * fr / (de + fr))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPartition {
    IntraTarget,
    CrossQuestion,
    CrossTopic,
}

impl EvalPartition {
    pub const ALL: [EvalPartition; 3] = [
        EvalPartition::IntraTarget,
        EvalPartition::CrossQuestion,
        EvalPartition::CrossTopic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalPartition::IntraTarget => "intra_target",
            EvalPartition::CrossQuestion => "cross_question",
            EvalPartition::CrossTopic => "cross_topic",
        }
    }

    fn title(self) -> &'static str {
        match self {
            EvalPartition::IntraTarget => "Intra-target",
            EvalPartition::CrossQuestion => "Cross-question",
            EvalPartition::CrossTopic => "Cross-topic",
        }
    }
}

/// Scores of one test partition. Absent cells had no examples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionScores {
    #[serde(rename = "DE", default, skip_serializing_if = "Option::is_none")]
    pub de: Option<f64>,
    #[serde(rename = "FR", default, skip_serializing_if = "Option::is_none")]
    pub fr: Option<f64>,
    /// zero-shot language, kept out of both means
    #[serde(rename = "IT", default, skip_serializing_if = "Option::is_none")]
    pub it: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arithmetic_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic_mean: Option<f64>,
    pub support: BTreeMap<Language, usize>,
}

impl PartitionScores {
    pub fn get(&self, language: Language) -> Option<f64> {
        match language {
            Language::De => self.de,
            Language::Fr => self.fr,
            Language::It => self.it,
        }
    }

    pub fn mean(&self, mode: MeanMode) -> Option<f64> {
        match mode {
            MeanMode::Arithmetic => self.arithmetic_mean,
            MeanMode::Harmonic => self.harmonic_mean,
        }
    }

    fn fill_means(&mut self) {
        if let (Some(de), Some(fr)) = (self.de, self.fr) {
            self.arithmetic_mean = combine_means(de, fr, MeanMode::Arithmetic).ok();
            self.harmonic_mean = combine_means(de, fr, MeanMode::Harmonic).ok();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_version: Option<String>,
    /// seconds since the Unix epoch
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub partitions: BTreeMap<EvalPartition, PartitionScores>,
}

pub const MEAN_MODE_FOOTNOTE: &str = "Mean: arithmetic mean of DE and FR unless stated otherwise. \
Published baseline tables label this column a harmonic mean while their values match the \
arithmetic mean (61.22 and 67.01 give 64.12 arithmetic, 63.98 harmonic). \
The JSON report carries both.";

impl EvalReport {
    pub fn cell(&self, partition: EvalPartition, language: Language) -> Option<f64> {
        self.partitions
            .get(&partition)
            .and_then(|s| s.get(language))
    }

    pub fn mean(&self, partition: EvalPartition, mode: MeanMode) -> Option<f64> {
        self.partitions.get(&partition).and_then(|s| s.mean(mode))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    /// One row per (partition, column); columns are DE, FR, IT and both means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id,partition,column,macro_f1,support\n");
        for p in EvalPartition::ALL {
            let Some(s) = self.partitions.get(&p) else {
                continue;
            };
            for lang in Language::ALL {
                if let Some(v) = s.get(lang) {
                    let n = s.support.get(&lang).copied().unwrap_or(0);
                    let _ = writeln!(
                        out,
                        "{},{},{},{v:.4},{n}",
                        csv_field(&self.metadata.model_id),
                        p.as_str(),
                        lang.code()
                    );
                }
            }
            for (name, v) in [
                ("mean_arithmetic", s.arithmetic_mean),
                ("mean_harmonic", s.harmonic_mean),
            ] {
                if let Some(v) = v {
                    let _ = writeln!(
                        out,
                        "{},{},{name},{v:.4},",
                        csv_field(&self.metadata.model_id),
                        p.as_str()
                    );
                }
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const EMPTY_CELL: &str = "—";

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| EMPTY_CELL.to_string(), |v| format!("{v:.2}"))
}

/// Text table with one row per report: partitions across, DE / FR / mean within each.
/// Italian zero-shot scores follow in a second block when any report has them.
pub fn render_table(reports: &[EvalReport], mode: MeanMode) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.metadata.model_id.chars().count())
        .max()
        .unwrap_or(0)
        .max(5);
    let cell_w = 7;
    let group_w = 3 * cell_w;
    let mean_label = match mode {
        MeanMode::Arithmetic => "Mean",
        MeanMode::Harmonic => "HMean",
    };

    let mut out = String::new();
    let _ = write!(out, "{:name_w$}", "");
    for p in EvalPartition::ALL {
        let _ = write!(out, " | {:^group_w$}", p.title());
    }
    out.push('\n');
    let _ = write!(out, "{:name_w$}", "Model");
    for _ in EvalPartition::ALL {
        let _ = write!(
            out,
            " | {:>cell_w$}{:>cell_w$}{:>cell_w$}",
            "DE", "FR", mean_label
        );
    }
    out.push('\n');
    let rule_len = name_w + EvalPartition::ALL.len() * (group_w + 3);
    out.push_str(&"-".repeat(rule_len));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:name_w$}", r.metadata.model_id);
        for p in EvalPartition::ALL {
            let _ = write!(
                out,
                " | {:>cell_w$}{:>cell_w$}{:>cell_w$}",
                fmt_cell(r.cell(p, Language::De)),
                fmt_cell(r.cell(p, Language::Fr)),
                fmt_cell(r.mean(p, mode)),
            );
        }
        out.push('\n');
    }

    let any_it = reports.iter().any(|r| {
        EvalPartition::ALL
            .iter()
            .any(|&p| r.cell(p, Language::It).is_some())
    });
    if any_it {
        out.push('\n');
        let _ = write!(out, "{:name_w$}", "IT (zero-shot)");
        for p in EvalPartition::ALL {
            let _ = write!(
                out,
                " | {:>cell_w$}",
                &p.title()[..cell_w.min(p.title().len())]
            );
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "{:name_w$}", r.metadata.model_id);
            for p in EvalPartition::ALL {
                let _ = write!(out, " | {:>cell_w$}", fmt_cell(r.cell(p, Language::It)));
            }
            out.push('\n');
        }
    }

    out.push('\n');
    match mode {
        MeanMode::Arithmetic => out.push_str(MEAN_MODE_FOOTNOTE),
        MeanMode::Harmonic => {
            out.push_str("HMean: harmonic mean of DE and FR. ");
            out.push_str(MEAN_MODE_FOOTNOTE);
        }
    }
    out.push('\n');
    out
}

fn score_group(
    model: &dyn StanceClassifier,
    examples: &[&StanceExample],
) -> Result<f64, EvalError> {
    let pairs: Vec<(&str, &str)> = examples
        .iter()
        .map(|e| (e.question.as_str(), e.comment.as_str()))
        .collect();
    let preds = model.predict_batch(&pairs)?;
    let predicted: Vec<StanceLabel> = preds.iter().map(|p| p.predicted_label).collect();
    let gold: Vec<StanceLabel> = examples.iter().map(|e| e.label).collect();
    macro_f1(&predicted, &gold)
}

/// Scores `model` on the three test partitions, per language. The model only ever
/// sees question and comment text.
pub fn evaluate_model(
    model: &dyn StanceClassifier,
    partitioned: &PartitionedDataset,
) -> Result<EvalReport, EvalError> {
    let mut partitions = BTreeMap::new();
    for (p, examples) in EvalPartition::ALL.into_iter().zip(partitioned.tests()) {
        let mut scores = PartitionScores::default();
        for lang in Language::ALL {
            let group: Vec<&StanceExample> =
                examples.iter().filter(|e| e.language == lang).collect();
            if group.is_empty() {
                continue;
            }
            let f1 = score_group(model, &group)?;
            scores.support.insert(lang, group.len());
            match lang {
                Language::De => scores.de = Some(f1),
                Language::Fr => scores.fr = Some(f1),
                Language::It => scores.it = Some(f1),
            }
        }
        scores.fill_means();
        partitions.insert(p, scores);
    }
    Ok(EvalReport {
        metadata: ReportMetadata {
            model_id: model.model_id(),
            ..ReportMetadata::default()
        },
        partitions,
    })
}
