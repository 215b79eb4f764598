//! Regenerates the small synthetic files under `data/`:
//!
//! ```text
//! cargo run -p stance-core --example make_mini_data -- data
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::json;
use stance_core::corpus::{partition, PartitionConfig, PartitionStrategy, StanceExample};
use stance_core::synthetic::{booklet, stance_corpus, SyntheticCorpusConfig};
use stance_core::Language;

fn write_lines(
    path: &Path,
    rows: impl IntoIterator<Item = serde_json::Value>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()
}

/// Record in the upstream release layout: lowercase language, `test_set` names.
fn upstream(e: &StanceExample, test_set: Option<&str>) -> serde_json::Value {
    let mut v = json!({
        "id": e.id,
        "language": e.language.code().to_ascii_lowercase(),
        "topic": e.topic,
        "question_id": e.question_id,
        "question": e.question,
        "comment": e.comment,
        "label": e.label,
    });
    if let Some(t) = test_set {
        v["test_set"] = json!(t);
    }
    v
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let out = Path::new(&out);
    std::fs::create_dir_all(out)?;

    let corpus = stance_corpus(&SyntheticCorpusConfig::default());
    write_lines(
        &out.join("mini_corpus.jsonl"),
        corpus.iter().map(|e| serde_json::to_value(e).unwrap()),
    )?;

    let xs = stance_corpus(&SyntheticCorpusConfig {
        examples: 800,
        topics: 8,
        seed: 21,
        ..SyntheticCorpusConfig::default()
    });
    let parts = partition(&xs, PartitionStrategy::Derive, &PartitionConfig::default())?;
    let dir = out.join("mini_xstance");
    std::fs::create_dir_all(&dir)?;
    write_lines(
        &dir.join("train.jsonl"),
        parts.train.iter().map(|e| upstream(e, None)),
    )?;
    write_lines(
        &dir.join("valid.jsonl"),
        parts.validation.iter().map(|e| upstream(e, None)),
    )?;
    let suffix = |e: &StanceExample| {
        if e.language == Language::It {
            "it"
        } else {
            "defr"
        }
    };
    let tests = [
        ("new_comments", &parts.test_intra_target),
        ("new_questions", &parts.test_cross_question),
        ("new_topics", &parts.test_cross_topic),
    ];
    write_lines(
        &dir.join("test.jsonl"),
        tests.iter().flat_map(|(name, set)| {
            set.iter()
                .map(move |e| upstream(e, Some(&format!("{name}_{}", suffix(e)))))
        }),
    )?;

    let statements = [
        booklet([9, 12, 12, 9], 220, Language::De, 1),
        booklet([7, 9, 9, 7], 220, Language::Fr, 2),
        booklet([4, 5, 5, 4], 220, Language::It, 3),
    ]
    .concat();
    write_lines(
        &out.join("mini_booklet.jsonl"),
        statements.iter().map(|s| serde_json::to_value(s).unwrap()),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
