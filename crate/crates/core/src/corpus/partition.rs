use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SplitTag, StanceExample};
use crate::types::{Language, StanceLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    /// Use the split tag every record carries.
    UseProvidedTags,
    /// Hold out whole topics and questions, then carve validation and intra-target test
    /// sets from the rest.
    Derive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub seed: u64,
    /// Share of topics held out for the cross-topic test set.
    pub cross_topic_fraction: f64,
    /// Share of the remaining questions held out for the cross-question test set.
    pub cross_question_fraction: f64,
    /// Share of each (language, label) stratum of DE/FR used for validation.
    pub validation_fraction: f64,
    /// Share of each (language, label) stratum of DE/FR used for the intra-target test.
    pub test_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            seed: 42,
            cross_topic_fraction: 0.1,
            cross_question_fraction: 0.1,
            validation_fraction: 0.075,
            test_fraction: 0.075,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionedDataset {
    pub train: Vec<StanceExample>,
    pub validation: Vec<StanceExample>,
    pub test_intra_target: Vec<StanceExample>,
    pub test_cross_question: Vec<StanceExample>,
    pub test_cross_topic: Vec<StanceExample>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("derived partition needs a topic, but example `{0}` has none")]
    MissingTopic(String),
    #[error("example `{0}` carries no split tag")]
    MissingTag(String),
    #[error("question `{0}` appears under more than one topic")]
    QuestionInSeveralTopics(String),
    #[error("invalid partition config: {0}")]
    Config(String),
}

/// (train, validation, test) shares in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioTriple {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRatios {
    /// Pooled over DE and FR.
    pub pooled: RatioTriple,
    pub per_language: BTreeMap<Language, RatioTriple>,
}

impl PartitionedDataset {
    pub fn tests(&self) -> [&[StanceExample]; 3] {
        [
            &self.test_intra_target,
            &self.test_cross_question,
            &self.test_cross_topic,
        ]
    }

    pub fn len(&self) -> usize {
        self.train.len()
            + self.validation.len()
            + self.tests().iter().map(|t| t.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Train/validation/test shares over DE and FR, pooled and per language.
    pub fn split_ratios(&self) -> SplitRatios {
        let count = |xs: &[StanceExample], lang: Option<Language>| {
            xs.iter()
                .filter(|e| match lang {
                    Some(l) => e.language == l,
                    None => e.language != Language::It,
                })
                .count() as f64
        };
        let triple = |lang: Option<Language>| {
            let tr = count(&self.train, lang);
            let va = count(&self.validation, lang);
            let te: f64 = self.tests().iter().map(|t| count(t, lang)).sum();
            let n = (tr + va + te).max(1.0);
            RatioTriple {
                train: 100.0 * tr / n,
                validation: 100.0 * va / n,
                test: 100.0 * te / n,
            }
        };
        SplitRatios {
            pooled: triple(None),
            per_language: [Language::De, Language::Fr]
                .into_iter()
                .map(|l| (l, triple(Some(l))))
                .collect(),
        }
    }
}

pub fn partition(
    examples: &[StanceExample],
    strategy: PartitionStrategy,
    config: &PartitionConfig,
) -> Result<PartitionedDataset, PartitionError> {
    match strategy {
        PartitionStrategy::UseProvidedTags => from_tags(examples),
        PartitionStrategy::Derive => derive(examples, config),
    }
}

fn from_tags(examples: &[StanceExample]) -> Result<PartitionedDataset, PartitionError> {
    let mut out = PartitionedDataset::default();
    for e in examples {
        let tag = e
            .split
            .ok_or_else(|| PartitionError::MissingTag(e.id.clone()))?;
        let bucket = match tag {
            SplitTag::Train => &mut out.train,
            SplitTag::Validation => &mut out.validation,
            SplitTag::TestIntraTarget => &mut out.test_intra_target,
            SplitTag::TestCrossQuestion => &mut out.test_cross_question,
            SplitTag::TestCrossTopic => &mut out.test_cross_topic,
        };
        bucket.push(e.clone());
    }
    Ok(out)
}

fn validate(config: &PartitionConfig) -> Result<(), PartitionError> {
    let unit = |name: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(PartitionError::Config(format!(
                "{name} must lie in [0, 1], got {v}"
            )))
        }
    };
    unit("cross_topic_fraction", config.cross_topic_fraction)?;
    unit("cross_question_fraction", config.cross_question_fraction)?;
    unit("validation_fraction", config.validation_fraction)?;
    unit("test_fraction", config.test_fraction)?;
    if config.validation_fraction + config.test_fraction >= 1.0 {
        return Err(PartitionError::Config(
            "validation_fraction + test_fraction must be below 1".into(),
        ));
    }
    Ok(())
}

/// Number of groups to hold out: none when fewer than two groups exist, otherwise
/// at least one and never all of them.
fn holdout_count(groups: usize, fraction: f64) -> usize {
    if groups < 2 || fraction <= 0.0 {
        return 0;
    }
    ((groups as f64 * fraction).round() as usize).clamp(1, groups - 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    Train,
    Validation,
    Intra,
    CrossQuestion,
    CrossTopic,
}

fn derive(
    examples: &[StanceExample],
    config: &PartitionConfig,
) -> Result<PartitionedDataset, PartitionError> {
    validate(config)?;
    let topics: Vec<&str> = examples
        .iter()
        .map(|e| {
            e.topic
                .as_deref()
                .ok_or_else(|| PartitionError::MissingTopic(e.id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut topic_of: BTreeMap<&str, &str> = BTreeMap::new();
    for (e, t) in examples.iter().zip(&topics) {
        if *topic_of.entry(e.question_id.as_str()).or_insert(t) != *t {
            return Err(PartitionError::QuestionInSeveralTopics(
                e.question_id.clone(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut topic_groups: Vec<&str> = topics
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    topic_groups.shuffle(&mut rng);
    let held_topics: HashSet<&str> = topic_groups
        .iter()
        .take(holdout_count(
            topic_groups.len(),
            config.cross_topic_fraction,
        ))
        .copied()
        .collect();

    let mut question_groups: Vec<&str> = examples
        .iter()
        .zip(&topics)
        .filter(|(_, t)| !held_topics.contains(*t))
        .map(|(e, _)| e.question_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    question_groups.shuffle(&mut rng);
    let held_questions: HashSet<&str> = question_groups
        .iter()
        .take(holdout_count(
            question_groups.len(),
            config.cross_question_fraction,
        ))
        .copied()
        .collect();

    let mut slots: Vec<Option<Slot>> = vec![None; examples.len()];
    // (language, label) strata over the DE/FR pool, in input order
    let mut strata: BTreeMap<(Language, StanceLabel), Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        if held_topics.contains(topics[i]) {
            slots[i] = Some(Slot::CrossTopic);
        } else if held_questions.contains(e.question_id.as_str()) {
            slots[i] = Some(Slot::CrossQuestion);
        } else if e.language != Language::It {
            strata.entry((e.language, e.label)).or_default().push(i);
        }
    }

    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_val = (n * config.validation_fraction).round() as usize;
        let n_test = (n * config.test_fraction).round() as usize;
        for (k, &i) in members.iter().enumerate() {
            slots[i] = Some(if k < n_val {
                Slot::Validation
            } else if k < n_val + n_test {
                Slot::Intra
            } else {
                Slot::Train
            });
        }
    }

    // Intra-target examples must have their (question, topic) in train; move the
    // rest into train. Train only grows, so one pass suffices.
    let train_targets = |slots: &[Option<Slot>]| -> HashSet<(&str, &str)> {
        examples
            .iter()
            .zip(slots)
            .zip(&topics)
            .filter(|((_, s), _)| **s == Some(Slot::Train))
            .map(|((e, _), t)| (e.question_id.as_str(), *t))
            .collect()
    };
    let seen = train_targets(&slots);
    for (i, e) in examples.iter().enumerate() {
        if slots[i] == Some(Slot::Intra) && !seen.contains(&(e.question_id.as_str(), topics[i])) {
            slots[i] = Some(Slot::Train);
        }
    }

    // Italian only ever lands in a test set.
    let train_questions: HashSet<&str> =
        train_targets(&slots).into_iter().map(|(q, _)| q).collect();
    for (i, e) in examples.iter().enumerate() {
        if slots[i].is_none() {
            debug_assert_eq!(e.language, Language::It);
            // a question has a single topic, so a trained question implies a trained target
            slots[i] = Some(if train_questions.contains(e.question_id.as_str()) {
                Slot::Intra
            } else {
                Slot::CrossQuestion
            });
        }
    }

    let mut out = PartitionedDataset::default();
    for (e, slot) in examples.iter().zip(slots) {
        let bucket = match slot.expect("every example is assigned") {
            Slot::Train => &mut out.train,
            Slot::Validation => &mut out.validation,
            Slot::Intra => &mut out.test_intra_target,
            Slot::CrossQuestion => &mut out.test_cross_question,
            Slot::CrossTopic => &mut out.test_cross_topic,
        };
        bucket.push(e.clone());
    }
    Ok(out)
}

/// Seeded subsample keeping `fraction` of every (language, label) stratum, rounded, with
/// at least one example per non-empty stratum. Input order is preserved.
pub fn stratified_subsample(
    examples: &[StanceExample],
    fraction: f64,
    seed: u64,
) -> Vec<StanceExample> {
    let mut strata: BTreeMap<(Language, StanceLabel), Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        strata.entry((e.language, e.label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; examples.len()];
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let n = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        for &i in &members[..n] {
            keep[i] = true;
        }
    }
    examples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| e.clone())
        .collect()
}

/// A broken partition invariant, as found by [`check_partition`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PartitionViolation {
    TrainTestOverlap {
        id: String,
    },
    CrossQuestionSeen {
        question_id: String,
    },
    CrossTopicSeen {
        topic: String,
    },
    IntraTargetUnseen {
        question_id: String,
        topic: Option<String>,
    },
    ItalianOutsideTest {
        id: String,
    },
}

/// Checks every partition invariant and lists the violations.
pub fn check_partition(p: &PartitionedDataset) -> Vec<PartitionViolation> {
    let mut out = Vec::new();
    let train_ids: HashSet<&str> = p.train.iter().map(|e| e.id.as_str()).collect();
    let train_questions: HashSet<&str> = p.train.iter().map(|e| e.question_id.as_str()).collect();
    let train_topics: HashSet<Option<&str>> = p.train.iter().map(|e| e.topic.as_deref()).collect();
    let train_targets: HashSet<(&str, Option<&str>)> = p
        .train
        .iter()
        .map(|e| (e.question_id.as_str(), e.topic.as_deref()))
        .collect();

    for test in p.tests() {
        for e in test {
            if train_ids.contains(e.id.as_str()) {
                out.push(PartitionViolation::TrainTestOverlap { id: e.id.clone() });
            }
        }
    }
    for e in &p.test_cross_question {
        if train_questions.contains(e.question_id.as_str()) {
            out.push(PartitionViolation::CrossQuestionSeen {
                question_id: e.question_id.clone(),
            });
        }
    }
    for e in &p.test_cross_topic {
        if train_topics.contains(&e.topic.as_deref()) {
            out.push(PartitionViolation::CrossTopicSeen {
                topic: e.topic.clone().unwrap_or_default(),
            });
        }
    }
    for e in &p.test_intra_target {
        if !train_targets.contains(&(e.question_id.as_str(), e.topic.as_deref())) {
            out.push(PartitionViolation::IntraTargetUnseen {
                question_id: e.question_id.clone(),
                topic: e.topic.clone(),
            });
        }
    }
    for e in p.train.iter().chain(&p.validation) {
        if e.language == Language::It {
            out.push(PartitionViolation::ItalianOutsideTest { id: e.id.clone() });
        }
    }
    out
}
