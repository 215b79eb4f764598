//! Training corpus: record schema, loading, partitioning and summary statistics.

mod adapter;
mod load;
mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{Language, StanceLabel};

pub use adapter::{AdapterError, CorpusAdapter, FieldMap};
pub use load::{
    load_corpus, load_corpus_dir, load_corpus_from_reader, CorpusError, CorpusFormat, Diagnostic,
    LoadedCorpus,
};
pub use partition::{
    check_partition, partition, stratified_subsample, PartitionConfig, PartitionError,
    PartitionStrategy, PartitionViolation, PartitionedDataset, SplitRatios,
};

/// Split tag carried by records of an upstream release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    TestIntraTarget,
    TestCrossQuestion,
    TestCrossTopic,
}

impl SplitTag {
    pub fn is_test(self) -> bool {
        matches!(
            self,
            SplitTag::TestIntraTarget | SplitTag::TestCrossQuestion | SplitTag::TestCrossTopic
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown split tag `{0}`")]
pub struct UnknownSplitTag(pub String);

impl FromStr for SplitTag {
    type Err = UnknownSplitTag;

    /// Accepts the canonical names plus the upstream release's file and test-set names
    /// (`valid`, `new_comments_defr`, `new_questions_it`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = s.trim().to_ascii_lowercase();
        let tag = match v.as_str() {
            "train" => SplitTag::Train,
            "valid" | "validation" | "dev" => SplitTag::Validation,
            "test_intra_target" | "intra_target" => SplitTag::TestIntraTarget,
            "test_cross_question" | "cross_question" => SplitTag::TestCrossQuestion,
            "test_cross_topic" | "cross_topic" => SplitTag::TestCrossTopic,
            _ if v.starts_with("new_comments") => SplitTag::TestIntraTarget,
            _ if v.starts_with("new_questions") => SplitTag::TestCrossQuestion,
            _ if v.starts_with("new_topics") => SplitTag::TestCrossTopic,
            _ => return Err(UnknownSplitTag(s.to_string())),
        };
        Ok(tag)
    }
}

/// One (question, comment) record with its binary stance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceExample {
    pub id: String,
    pub question: String,
    pub comment: String,
    pub label: StanceLabel,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    pub question_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitTag>,
}

/// Returns exactly the examples in `language`, order preserved.
pub fn filter_language(examples: &[StanceExample], language: Language) -> Vec<StanceExample> {
    examples
        .iter()
        .filter(|e| e.language == language)
        .cloned()
        .collect()
}

/// Key used in [`CorpusStats::per_topic`] for records without a topic.
pub const NO_TOPIC: &str = "(none)";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_examples: usize,
    pub per_language: BTreeMap<Language, usize>,
    pub per_label: BTreeMap<StanceLabel, usize>,
    pub per_topic: BTreeMap<String, usize>,
}

pub fn corpus_stats(examples: &[StanceExample]) -> CorpusStats {
    let mut stats = CorpusStats {
        total_examples: examples.len(),
        ..CorpusStats::default()
    };
    for e in examples {
        *stats.per_language.entry(e.language).or_default() += 1;
        *stats.per_label.entry(e.label).or_default() += 1;
        let topic = e.topic.clone().unwrap_or_else(|| NO_TOPIC.to_string());
        *stats.per_topic.entry(topic).or_default() += 1;
    }
    stats
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "examples: {}", self.total_examples)?;
        for (lang, n) in &self.per_language {
            writeln!(f, "  language {lang}: {n}")?;
        }
        for (label, n) in &self.per_label {
            writeln!(f, "  label {label}: {n}")?;
        }
        writeln!(f, "  topics: {}", self.per_topic.len())
    }
}

#[cfg(test)]
pub(crate) fn example(
    id: &str,
    qid: &str,
    topic: &str,
    language: Language,
    label: StanceLabel,
) -> StanceExample {
    StanceExample {
        id: id.to_string(),
        question: format!("question {qid}"),
        comment: format!("comment {id}"),
        label,
        language,
        topic: Some(topic.to_string()),
        question_id: qid.to_string(),
        split: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filter_selects_language_in_order() {
        let xs = vec![
            example("1", "q", "t", Language::De, StanceLabel::Favor),
            example("2", "q", "t", Language::Fr, StanceLabel::Favor),
            example("3", "q", "t", Language::De, StanceLabel::Against),
            example("4", "q", "t", Language::Fr, StanceLabel::Against),
            example("5", "q", "t", Language::De, StanceLabel::Favor),
        ];
        let de = filter_language(&xs, Language::De);
        let ids: Vec<_> = de.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["1", "3", "5"]);
        assert!(filter_language(&[], Language::De).is_empty());
    }

    #[test]
    fn stats_of_empty_and_small_lists() {
        let s = corpus_stats(&[]);
        assert_eq!(s.total_examples, 0);
        assert!(s.per_label.is_empty() && s.per_language.is_empty() && s.per_topic.is_empty());

        let xs = vec![
            example("1", "q", "t", Language::De, StanceLabel::Favor),
            example("2", "q", "t", Language::Fr, StanceLabel::Favor),
            example("3", "q", "u", Language::De, StanceLabel::Against),
        ];
        let s = corpus_stats(&xs);
        assert_eq!(s.total_examples, 3);
        assert_eq!(s.per_label[&StanceLabel::Favor], 2);
        assert_eq!(s.per_label[&StanceLabel::Against], 1);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["per_label"]["FAVOR"], 2);
        assert_eq!(json["per_language"]["DE"], 2);
    }

    #[test]
    fn split_tags_accept_upstream_names() {
        assert_eq!("valid".parse::<SplitTag>().unwrap(), SplitTag::Validation);
        assert_eq!(
            "new_comments_defr".parse::<SplitTag>().unwrap(),
            SplitTag::TestIntraTarget
        );
        assert_eq!(
            "new_questions_it".parse::<SplitTag>().unwrap(),
            SplitTag::TestCrossQuestion
        );
        assert_eq!(
            "new_topics_defr".parse::<SplitTag>().unwrap(),
            SplitTag::TestCrossTopic
        );
        assert!("holdout".parse::<SplitTag>().is_err());
    }

    fn arb_example() -> impl Strategy<Value = StanceExample> {
        (0u32..1000, 0u8..3, any::<bool>(), 0u8..4).prop_map(|(id, lang, favor, topic)| {
            example(
                &id.to_string(),
                &format!("q{}", id % 7),
                &format!("t{topic}"),
                Language::ALL[lang as usize],
                if favor {
                    StanceLabel::Favor
                } else {
                    StanceLabel::Against
                },
            )
        })
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(xs in proptest::collection::vec(arb_example(), 0..40), lang in 0usize..3) {
            let lang = Language::ALL[lang];
            let once = filter_language(&xs, lang);
            prop_assert_eq!(filter_language(&once, lang), once);
        }

        #[test]
        fn stats_breakdowns_sum_to_total(xs in proptest::collection::vec(arb_example(), 0..40)) {
            let s = corpus_stats(&xs);
            prop_assert_eq!(s.per_language.values().sum::<usize>(), s.total_examples);
            prop_assert_eq!(s.per_label.values().sum::<usize>(), s.total_examples);
            prop_assert_eq!(s.per_topic.values().sum::<usize>(), s.total_examples);
        }
    }
}
