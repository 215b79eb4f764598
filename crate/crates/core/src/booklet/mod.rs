//! Voting booklet statements: loading, statistics, and the σ-based three-way labeling of
//! favor probabilities.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;
use crate::report::{compute_box_stats, BoxStats};
use crate::scalar::{two_sum, Real};
use crate::types::{Language, PredictionError, StanceClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Issue {
    #[serde(rename = "FFI")]
    Ffi,
    #[serde(rename = "OASI_1", alias = "OASI-1")]
    Oasi1,
    #[serde(rename = "OASI_2", alias = "OASI-2")]
    Oasi2,
    #[serde(rename = "FAWT")]
    Fawt,
}

impl Issue {
    pub const ALL: [Issue; 4] = [Issue::Ffi, Issue::Oasi1, Issue::Oasi2, Issue::Fawt];

    pub fn code(self) -> &'static str {
        match self {
            Issue::Ffi => "FFI",
            Issue::Oasi1 => "OASI_1",
            Issue::Oasi2 => "OASI_2",
            Issue::Fawt => "FAWT",
        }
    }

    /// Label used in tables and plots.
    pub fn display_name(self) -> &'static str {
        match self {
            Issue::Ffi => "FFI",
            Issue::Oasi1 => "OASI-1",
            Issue::Oasi2 => "OASI-2",
            Issue::Fawt => "FAWT",
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown issue code `{0}` (expected FFI, OASI_1, OASI_2 or FAWT)")]
pub struct UnknownIssue(pub String);

impl FromStr for Issue {
    type Err = UnknownIssue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "FFI" => Ok(Issue::Ffi),
            "OASI_1" | "OASI1" => Ok(Issue::Oasi1),
            "OASI_2" | "OASI2" => Ok(Issue::Oasi2),
            "FAWT" => Ok(Issue::Fawt),
            _ => Err(UnknownIssue(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookletStatement {
    pub id: String,
    pub issue: Issue,
    pub language: Language,
    pub text: String,
    pub target_question: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BookletError {
    #[error("booklet file not found: {0}")]
    Missing(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Record { line: u64, message: String },
    #[error(
        "statement `{id}` has target question {found:?}, but other {issue} statements in {language:?} use {expected:?}"
    )]
    InconsistentQuestion {
        id: String,
        issue: Issue,
        language: Language,
        expected: String,
        found: String,
    },
    #[error("no statements")]
    Empty,
}

#[derive(Deserialize)]
struct RawStatement {
    id: serde_json::Value,
    issue: String,
    language: String,
    text: String,
    target_question: String,
}

fn validate(raw: RawStatement, line: u64) -> Result<BookletStatement, BookletError> {
    let err = |message: String| BookletError::Record { line, message };
    let id = match raw.id {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(err(format!("id must be a string or number, got {other}"))),
    };
    let issue = raw.issue.parse::<Issue>().map_err(|e| err(e.to_string()))?;
    let language = raw
        .language
        .parse::<Language>()
        .map_err(|e| err(e.to_string()))?;
    if raw.text.trim().is_empty() {
        return Err(err(format!("statement `{id}` has empty text")));
    }
    if raw.target_question.trim().is_empty() {
        return Err(err(format!(
            "statement `{id}` has an empty target_question"
        )));
    }
    Ok(BookletStatement {
        id,
        issue,
        language,
        text: raw.text,
        target_question: raw.target_question,
    })
}

fn check_questions(statements: &[BookletStatement]) -> Result<(), BookletError> {
    let mut seen: BTreeMap<(Issue, Language), &str> = BTreeMap::new();
    for s in statements {
        let expected = *seen
            .entry((s.issue, s.language))
            .or_insert(s.target_question.as_str());
        if expected != s.target_question {
            return Err(BookletError::InconsistentQuestion {
                id: s.id.clone(),
                issue: s.issue,
                language: s.language,
                expected: expected.to_string(),
                found: s.target_question.clone(),
            });
        }
    }
    Ok(())
}

pub fn load_booklet_from_reader<R: Read>(
    reader: R,
    format: CorpusFormat,
) -> Result<Vec<BookletStatement>, BookletError> {
    let mut out = Vec::new();
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i as u64 + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawStatement =
                    serde_json::from_str(&line).map_err(|e| BookletError::Record {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                out.push(validate(raw, line_no)?);
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(reader);
            for (i, rec) in rdr.deserialize::<BTreeMap<String, String>>().enumerate() {
                // header is line 1
                let line_no = i as u64 + 2;
                let rec = rec.map_err(|e| BookletError::Record {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let field = |name: &str| {
                    rec.get(name).cloned().ok_or_else(|| BookletError::Record {
                        line: line_no,
                        message: format!("missing field `{name}`"),
                    })
                };
                let raw = RawStatement {
                    id: serde_json::Value::String(field("id")?),
                    issue: field("issue")?,
                    language: field("language")?,
                    text: field("text")?,
                    target_question: field("target_question")?,
                };
                out.push(validate(raw, line_no)?);
            }
        }
    }
    check_questions(&out)?;
    Ok(out)
}

/// Loads a JSONL or CSV booklet file (chosen by extension).
pub fn load_booklet(path: impl AsRef<Path>) -> Result<Vec<BookletStatement>, BookletError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => BookletError::Missing(path.display().to_string()),
        _ => BookletError::Io(e),
    })?;
    load_booklet_from_reader(file, CorpusFormat::from_path(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueCount {
    pub count: usize,
    /// percent of all statements
    pub share: f64,
    /// characters, not bytes
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookletStats {
    pub total: usize,
    pub per_issue: BTreeMap<Issue, IssueCount>,
}

impl fmt::Display for BookletStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>6} {:>8} {:>12}",
            "Issue", "Count", "Share", "Mean length"
        )?;
        for (issue, c) in &self.per_issue {
            writeln!(
                f,
                "{:<8} {:>6} {:>7.1}% {:>12.1}",
                issue.display_name(),
                c.count,
                c.share,
                c.mean_length
            )?;
        }
        write!(f, "{:<8} {:>6}", "Total", self.total)
    }
}

pub fn booklet_stats(statements: &[BookletStatement]) -> Result<BookletStats, BookletError> {
    if statements.is_empty() {
        return Err(BookletError::Empty);
    }
    let mut acc: BTreeMap<Issue, (usize, usize)> = BTreeMap::new();
    for s in statements {
        let e = acc.entry(s.issue).or_default();
        e.0 += 1;
        e.1 += s.text.chars().count();
    }
    let total = statements.len();
    let per_issue = acc
        .into_iter()
        .map(|(issue, (count, chars))| {
            (
                issue,
                IssueCount {
                    count,
                    share: 100.0 * count as f64 / total as f64,
                    mean_length: chars as f64 / count as f64,
                },
            )
        })
        .collect();
    Ok(BookletStats { total, per_issue })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// divide by n
    #[default]
    Population,
    /// divide by n - 1
    Sample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaScope {
    /// one σ per issue across all languages
    #[default]
    Pooled,
    /// one σ per (issue, language)
    PerLanguage,
}

impl FromStr for SigmaScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pooled" => Ok(SigmaScope::Pooled),
            "per-language" => Ok(SigmaScope::PerLanguage),
            other => Err(format!(
                "unknown sigma scope `{other}` (expected pooled or per-language)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("standard deviation of an empty list")]
pub struct EmptySample;

/// Standard deviation of favor probabilities. Sample mode on a single value gives 0.
pub fn issue_sigma<T: Real>(favor_probs: &[T], mode: SigmaMode) -> Result<T, EmptySample> {
    if favor_probs.is_empty() {
        return Err(EmptySample);
    }
    let n = favor_probs.len();
    // shifting by the first value makes identical inputs give exactly zero
    let p0 = favor_probs[0];
    let mean = p0 + favor_probs.iter().map(|&p| p - p0).sum::<T>() / T::of_usize(n);
    let ss: T = favor_probs.iter().map(|&p| (p - mean) * (p - mean)).sum();
    let denom = match mode {
        SigmaMode::Population => n,
        SigmaMode::Sample if n > 1 => n - 1,
        SigmaMode::Sample => return Ok(T::zero()),
    };
    Ok((ss / T::of_usize(denom)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ThreeWayLabel {
    For,
    Against,
    Neutral,
}

impl ThreeWayLabel {
    pub const ALL: [ThreeWayLabel; 3] = [
        ThreeWayLabel::For,
        ThreeWayLabel::Against,
        ThreeWayLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ThreeWayLabel::For => "FOR",
            ThreeWayLabel::Against => "AGAINST",
            ThreeWayLabel::Neutral => "NEUTRAL",
        }
    }
}

/// NEUTRAL iff `p - 0.5` lies in the closed interval `[-sigma, sigma]`, decided on the
/// exact value of `p - 0.5` rather than its rounded difference. Otherwise FOR iff
/// `p > 0.5`.
pub fn three_way_label<T: Real>(p: T, sigma: T) -> ThreeWayLabel {
    let (s, e) = two_sum(p, -T::of(0.5));
    // s is the correctly rounded difference, so it orders against the float sigma
    // the same way the exact value does unless they are equal; then e decides.
    let within_upper = s < sigma || (s == sigma && e <= T::zero());
    let within_lower = s > -sigma || (s == -sigma && e >= T::zero());
    if within_upper && within_lower {
        ThreeWayLabel::Neutral
    } else if s > T::zero() || (s == T::zero() && e > T::zero()) {
        ThreeWayLabel::For
    } else {
        ThreeWayLabel::Against
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub statement_id: String,
    pub prob_favor: f64,
    pub three_way_label: ThreeWayLabel,
    pub sigma_used: f64,
}

pub fn assign_three_way(predictions: &[(String, f64)], sigma: f64) -> Vec<LabeledPrediction> {
    predictions
        .iter()
        .map(|(id, p)| LabeledPrediction {
            statement_id: id.clone(),
            prob_favor: *p,
            three_way_label: three_way_label(*p, sigma),
            sigma_used: sigma,
        })
        .collect()
}

/// A statement's prediction with its grouping keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementResult {
    pub issue: Issue,
    pub language: Language,
    #[serde(flatten)]
    pub prediction: LabeledPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueSummary {
    pub issue: Issue,
    /// set for per-language reports
    #[serde(skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
    pub n: usize,
    pub sigma: f64,
    #[serde(rename = "box")]
    pub box_stats: BoxStats,
    /// percent of statements per label
    pub label_percent: BTreeMap<ThreeWayLabel, f64>,
    pub label_counts: BTreeMap<ThreeWayLabel, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueReport {
    pub scope: SigmaScope,
    pub sigma_mode: SigmaMode,
    pub groups: Vec<IssueSummary>,
    pub statements: Vec<StatementResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl IssueReport {
    pub fn group(&self, issue: Issue, language: Option<Language>) -> Option<&IssueSummary> {
        self.groups
            .iter()
            .find(|g| g.issue == issue && g.language == language)
    }

    /// One row per statement.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statement_id,issue,language,prob_favor,sigma,label\n");
        for s in &self.statements {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&s.prediction.statement_id),
                s.issue.code(),
                s.language.code(),
                s.prediction.prob_favor,
                s.prediction.sigma_used,
                s.prediction.three_way_label.as_str()
            ));
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

fn summarize(
    issue: Issue,
    language: Option<Language>,
    probs: &[f64],
    labels: &[ThreeWayLabel],
    sigma: f64,
) -> IssueSummary {
    let mut counts: BTreeMap<ThreeWayLabel, usize> =
        ThreeWayLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for l in labels {
        *counts.get_mut(l).expect("all labels present") += 1;
    }
    let label_percent = counts
        .iter()
        .map(|(&l, &c)| (l, 100.0 * c as f64 / probs.len() as f64))
        .collect();
    IssueSummary {
        issue,
        language,
        n: probs.len(),
        sigma,
        box_stats: compute_box_stats(probs)
            .expect("group is non-empty and probabilities are not NaN"),
        label_percent,
        label_counts: counts,
    }
}

/// The statements of one language from `report`, with their labels and σ unchanged and
/// the group summaries recomputed per issue. Returns `None` when the language is absent.
pub fn language_view(report: &IssueReport, language: Language) -> Option<IssueReport> {
    let statements: Vec<StatementResult> = report
        .statements
        .iter()
        .filter(|s| s.language == language)
        .cloned()
        .collect();
    if statements.is_empty() {
        return None;
    }
    let mut by_issue: BTreeMap<Issue, Vec<&StatementResult>> = BTreeMap::new();
    for s in &statements {
        by_issue.entry(s.issue).or_default().push(s);
    }
    let groups = by_issue
        .into_iter()
        .map(|(issue, members)| {
            let probs: Vec<f64> = members.iter().map(|s| s.prediction.prob_favor).collect();
            let labels: Vec<ThreeWayLabel> = members
                .iter()
                .map(|s| s.prediction.three_way_label)
                .collect();
            // one σ per (issue, language) under either scope
            summarize(
                issue,
                Some(language),
                &probs,
                &labels,
                members[0].prediction.sigma_used,
            )
        })
        .collect();
    Some(IssueReport {
        scope: report.scope,
        sigma_mode: report.sigma_mode,
        groups,
        statements,
        warnings: report.warnings.clone(),
    })
}

/// Labels statements whose favor probabilities are already known. `probs[i]` belongs to
/// `statements[i]`; output keeps input order.
pub fn label_statements(
    statements: &[BookletStatement],
    probs: &[f64],
    scope: SigmaScope,
    sigma_mode: SigmaMode,
) -> IssueReport {
    assert_eq!(statements.len(), probs.len());
    let key = |s: &BookletStatement| match scope {
        SigmaScope::Pooled => (s.issue, None),
        SigmaScope::PerLanguage => (s.issue, Some(s.language)),
    };
    let mut groups: BTreeMap<(Issue, Option<Language>), Vec<usize>> = BTreeMap::new();
    for (i, s) in statements.iter().enumerate() {
        groups.entry(key(s)).or_default().push(i);
    }

    let mut warnings = Vec::new();
    let mut sigma_of = BTreeMap::new();
    let mut summaries = Vec::new();
    for (&(issue, language), idx) in &groups {
        let ps: Vec<f64> = idx.iter().map(|&i| probs[i]).collect();
        let sigma = if ps.len() < 2 {
            let where_ = language.map_or(String::new(), |l| format!(" ({})", l.code()));
            warnings.push(format!(
                "{}{where_} has {} statement(s); σ set to 0",
                issue.display_name(),
                ps.len()
            ));
            0.0
        } else {
            issue_sigma(&ps, sigma_mode).expect("group is non-empty")
        };
        sigma_of.insert((issue, language), sigma);

        let labels: Vec<ThreeWayLabel> = ps.iter().map(|&p| three_way_label(p, sigma)).collect();
        summaries.push(summarize(issue, language, &ps, &labels, sigma));
    }

    let results = statements
        .iter()
        .zip(probs)
        .map(|(s, &p)| {
            let sigma = sigma_of[&key(s)];
            StatementResult {
                issue: s.issue,
                language: s.language,
                prediction: LabeledPrediction {
                    statement_id: s.id.clone(),
                    prob_favor: p,
                    three_way_label: three_way_label(p, sigma),
                    sigma_used: sigma,
                },
            }
        })
        .collect();

    IssueReport {
        scope,
        sigma_mode,
        groups: summaries,
        statements: results,
        warnings,
    }
}

/// Predicts every statement against its target question and labels the results.
pub fn analyze(
    statements: &[BookletStatement],
    model: &dyn StanceClassifier,
    scope: SigmaScope,
    sigma_mode: SigmaMode,
) -> Result<IssueReport, PredictionError> {
    let pairs: Vec<(&str, &str)> = statements
        .iter()
        .map(|s| (s.target_question.as_str(), s.text.as_str()))
        .collect();
    let preds = model.predict_batch(&pairs)?;
    if preds.len() != statements.len() {
        return Err(PredictionError(format!(
            "model returned {} predictions for {} statements",
            preds.len(),
            statements.len()
        )));
    }
    let probs: Vec<f64> = preds.iter().map(|p| p.prob_favor).collect();
    if probs.iter().any(|p| p.is_nan()) {
        return Err(PredictionError("model returned a NaN probability".into()));
    }
    Ok(label_statements(statements, &probs, scope, sigma_mode))
}
