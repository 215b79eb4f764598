//! Seeded synthetic corpora and booklets for tests, demos and the shipped mini data.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::booklet::{BookletStatement, Issue};
use crate::corpus::StanceExample;
use crate::types::{Language, StanceLabel};

struct Lexicon {
    question: &'static [&'static str],
    favor: &'static [&'static str],
    against: &'static [&'static str],
    filler: &'static [&'static str],
}

fn lexicon(language: Language) -> Lexicon {
    match language {
        Language::De => Lexicon {
            question: &["Befürworten Sie", "Sind Sie für", "Unterstützen Sie"],
            favor: &[
                "ja",
                "dafür",
                "unterstütze",
                "sinnvoll",
                "richtig",
                "befürworte",
            ],
            against: &["nein", "dagegen", "lehne", "unnötig", "falsch", "schädlich"],
            filler: &[
                "die",
                "der",
                "und",
                "wir",
                "müssen",
                "das",
                "ist",
                "für",
                "alle",
                "schweiz",
                "staat",
                "kosten",
                "zukunft",
                "menschen",
                "gemeinden",
                "heute",
                "klar",
                "sehr",
            ],
        },
        Language::Fr => Lexicon {
            question: &["Êtes-vous favorable à", "Soutenez-vous", "Approuvez-vous"],
            favor: &["oui", "pour", "soutiens", "utile", "juste", "favorable"],
            against: &["non", "contre", "rejette", "inutile", "faux", "nuisible"],
            filler: &[
                "le", "la", "et", "nous", "devons", "est", "pour", "tous", "suisse", "état",
                "coûts", "avenir", "gens", "communes", "aujourd", "clair", "très",
            ],
        },
        Language::It => Lexicon {
            question: &["È favorevole a", "Sostiene", "Approva"],
            favor: &["sì", "favore", "sostengo", "utile", "giusto", "favorevole"],
            against: &[
                "no",
                "contrario",
                "respingo",
                "inutile",
                "sbagliato",
                "dannoso",
            ],
            filler: &[
                "il", "la", "e", "noi", "dobbiamo", "è", "per", "tutti", "svizzera", "stato",
                "costi", "futuro", "persone", "comuni", "oggi", "chiaro", "molto",
            ],
        },
    }
}

const SUBJECTS: &[&str] = &[
    "Tempolimit",
    "Mindestlohn",
    "Rentenalter",
    "Grundeinkommen",
    "Kernenergie",
    "Zollabbau",
    "Bankgeheimnis",
    "Wehrpflicht",
    "Stimmrechtsalter",
    "Mietpreisbremse",
    "Tierschutz",
    "Strassenbau",
    "Medienförderung",
    "Schuldenbremse",
    "Zweitwohnungen",
    "Ladenöffnung",
];

#[derive(Debug, Clone)]
pub struct SyntheticCorpusConfig {
    pub examples: usize,
    pub topics: usize,
    pub questions_per_topic: usize,
    /// share of Italian examples; the rest is split evenly between DE and FR
    pub italian_share: f64,
    /// probability that a label is flipped after the comment was generated
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            examples: 500,
            topics: 6,
            questions_per_topic: 4,
            italian_share: 0.1,
            label_noise: 0.1,
            seed: 7,
        }
    }
}

/// Comments contain one or two stance cue words among filler, so a bag-of-words model
/// can learn them; `label_noise` keeps scores away from 100.
pub fn stance_corpus(cfg: &SyntheticCorpusConfig) -> Vec<StanceExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_questions = (cfg.topics * cfg.questions_per_topic).max(1);
    (0..cfg.examples)
        .map(|i| {
            let language = if rng.random_bool(cfg.italian_share.clamp(0.0, 1.0)) {
                Language::It
            } else if rng.random_bool(0.5) {
                Language::De
            } else {
                Language::Fr
            };
            let q = rng.random_range(0..n_questions);
            let topic = q / cfg.questions_per_topic.max(1);
            let lex = lexicon(language);
            let subject = SUBJECTS[q % SUBJECTS.len()];
            let question = format!(
                "{} {} ({})?",
                lex.question[q % lex.question.len()],
                subject,
                q
            );
            let favor = rng.random_bool(0.5);
            let cues = if favor { lex.favor } else { lex.against };
            let len = rng.random_range(6..14);
            let mut words: Vec<&str> = (0..len)
                .map(|_| *lex.filler.choose(&mut rng).unwrap())
                .collect();
            for _ in 0..rng.random_range(1..=2) {
                let at = rng.random_range(0..=words.len());
                words.insert(at, cues.choose(&mut rng).unwrap());
            }
            let mut label = if favor {
                StanceLabel::Favor
            } else {
                StanceLabel::Against
            };
            if rng.random_bool(cfg.label_noise.clamp(0.0, 1.0)) {
                label = label.flipped();
            }
            StanceExample {
                id: format!("s{i}"),
                question,
                comment: words.join(" "),
                label,
                language,
                topic: Some(format!("topic{topic}")),
                question_id: format!("q{q}"),
                split: None,
            }
        })
        .collect()
}

/// Booklet with `counts[i]` statements for `Issue::ALL[i]`, texts of roughly `mean_len`
/// characters, in the given language.
pub fn booklet(
    counts: [usize; 4],
    mean_len: usize,
    language: Language,
    seed: u64,
) -> Vec<BookletStatement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = lexicon(language);
    let mut out = Vec::new();
    for (issue, &count) in Issue::ALL.iter().zip(&counts) {
        for k in 0..count {
            let target = rng
                .random_range(mean_len / 2..=mean_len + mean_len / 2)
                .max(1);
            let mut text = String::new();
            while text.chars().count() < target {
                if !text.is_empty() {
                    text.push(' ');
                }
                let pool = match rng.random_range(0..4) {
                    0 => lex.favor,
                    1 => lex.against,
                    _ => lex.filler,
                };
                text.push_str(pool.choose(&mut rng).unwrap());
            }
            out.push(BookletStatement {
                id: format!("{}-{}-{k}", issue.code(), language.code()),
                issue: *issue,
                language,
                text,
                target_question: format!("{} {}?", lex.question[0], issue.display_name()),
            });
        }
    }
    out
}
