use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use stance_core::corpus::{load_corpus, CorpusAdapter, CorpusFormat, StanceExample};
use stance_core::lookup::LookupModel;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn mini_corpus() -> String {
    repo("data/mini_corpus.jsonl").display().to_string()
}

fn mini_booklet() -> String {
    repo("data/mini_booklet.jsonl").display().to_string()
}

fn stance(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stance"))
        .current_dir(cwd)
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn examples() -> Vec<StanceExample> {
    load_corpus(
        mini_corpus(),
        CorpusFormat::Jsonl,
        &CorpusAdapter::default(),
    )
    .unwrap()
    .into_strict()
    .unwrap()
}

#[test]
fn ridge_trains_on_mini_corpus_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = stance(
        dir.path(),
        &[
            "train",
            "--corpus",
            &mini_corpus(),
            "--kind",
            "ridge",
            "--output",
            "out",
        ],
    );
    ok(&o);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert!(dir.path().join("models/ridge.model").is_file());
    let m = read_json(&dir.path().join("out/train_metrics.json"));
    assert_eq!(m["metadata"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["metadata"]["seed"], 42);
    assert_eq!(m["metadata"]["code_version"], env!("CARGO_PKG_VERSION"));
    let sizes = m["partition_sizes"].as_object().unwrap();
    assert_eq!(
        sizes.values().map(|v| v.as_u64().unwrap()).sum::<u64>(),
        500
    );
    assert!(stdout(&o).contains("validation macro-F1"));
}

#[test]
fn negative_epochs_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[model]\nkind = \"subword\"\n[model.subword]\nepochs = -2\n",
    )
    .unwrap();
    let o = stance(
        dir.path(),
        &["train", "--config", "bad.toml", "--corpus", &mini_corpus()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("model.subword.epochs"),
        "{}",
        stderr(&o)
    );
    assert!(!dir.path().join("models").exists());

    // zero passes parsing but fails validation
    std::fs::write(
        dir.path().join("zero.toml"),
        "[model]\nkind = \"encoder\"\n[model.encoder]\nepochs = 0\n",
    )
    .unwrap();
    let o = stance(
        dir.path(),
        &["train", "--config", "zero.toml", "--corpus", &mini_corpus()],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochs"), "{}", stderr(&o));
}

#[test]
fn rerun_with_same_seed_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let model = format!("{out}.model");
        let args = [
            "train",
            "--corpus",
            &mini_corpus(),
            "--kind",
            "svm",
            "--seed",
            seed,
            "--output",
            out,
            "--model",
            &model,
        ];
        ok(&stance(dir.path(), &args));
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("train_metrics.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert_eq!(
        std::fs::read(dir.path().join("a.model")).unwrap(),
        std::fs::read(dir.path().join("b.model")).unwrap()
    );
}

#[test]
fn oracle_model_scores_100_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    LookupModel::oracle(&examples())
        .save(dir.path().join("oracle.json"))
        .unwrap();
    let o = stance(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            &mini_corpus(),
            "--model",
            "oracle.json",
            "--output",
            "out",
        ],
    );
    ok(&o);
    let report = read_json(&dir.path().join("out/eval_report.json"));
    let mut cells = 0;
    for (_, scores) in report["partitions"].as_object().unwrap() {
        for col in ["DE", "FR", "IT", "arithmetic_mean", "harmonic_mean"] {
            if let Some(v) = scores.get(col) {
                assert_eq!(v.as_f64().unwrap(), 100.0, "{col}");
                cells += 1;
            }
        }
    }
    assert!(cells >= 12, "{cells}");
    let table = stdout(&o);
    let model_row = table.lines().find(|l| l.starts_with("oracle")).unwrap();
    assert_eq!(model_row.matches("100.00").count(), 9, "{model_row}");
    assert!(table.contains("64.12"));
}

#[test]
fn empty_cross_topic_partition_renders_a_dash() {
    let dir = tempfile::tempdir().unwrap();
    let tags = [
        "train",
        "train",
        "train",
        "validation",
        "test_intra_target",
        "test_cross_question",
    ];
    let lines: Vec<String> = examples()
        .into_iter()
        .filter(|e| e.language != stance_core::Language::It)
        .enumerate()
        .map(|(i, mut e)| {
            e.split = Some(tags[i % tags.len()].parse().unwrap());
            serde_json::to_string(&e).unwrap()
        })
        .collect();
    std::fs::write(dir.path().join("tagged.jsonl"), lines.join("\n")).unwrap();
    ok(&stance(
        dir.path(),
        &[
            "train",
            "--corpus",
            "tagged.jsonl",
            "--model",
            "r.model",
            "--output",
            "out",
        ],
    ));
    let o = stance(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            "tagged.jsonl",
            "--model",
            "r.model",
            "--output",
            "out",
        ],
    );
    ok(&o);
    let row = stdout(&o)
        .lines()
        .find(|l| l.starts_with("ridge"))
        .unwrap()
        .to_string();
    let cross_topic = row.rsplit('|').next().unwrap();
    assert_eq!(cross_topic.matches('—').count(), 3, "{row}");
    let report = read_json(&dir.path().join("out/eval_report.json"));
    let ct = &report["partitions"]["cross_topic"];
    for col in ["DE", "FR", "IT", "arithmetic_mean", "harmonic_mean"] {
        assert!(ct.get(col).is_none(), "{col} present: {ct}");
    }
    assert!(report["partitions"]["intra_target"].get("DE").is_some());
}

/// Independent labeling: σ from its definition, then the closed-interval rule on exact
/// rationals.
fn oracle_labels(
    rows: &[(String, String, f64)],
    per_language: bool,
) -> BTreeMap<String, (f64, &'static str)> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (issue, lang, p) in rows {
        let key = if per_language {
            format!("{issue}/{lang}")
        } else {
            issue.clone()
        };
        groups.entry(key).or_default().push(*p);
    }
    let sigma: BTreeMap<String, f64> = groups
        .iter()
        .map(|(k, ps)| {
            let n = ps.len() as f64;
            let mean = ps.iter().sum::<f64>() / n;
            (
                k.clone(),
                (ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt(),
            )
        })
        .collect();
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    rows.iter()
        .enumerate()
        .map(|(i, (issue, lang, p))| {
            let key = if per_language {
                format!("{issue}/{lang}")
            } else {
                issue.clone()
            };
            let s = sigma[&key];
            let d = BigRational::from_float(*p).unwrap() - &half;
            let label = if d.abs() <= BigRational::from_float(s).unwrap() {
                "NEUTRAL"
            } else if d.is_positive() {
                "FOR"
            } else {
                "AGAINST"
            };
            (i.to_string(), (s, label))
        })
        .collect()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let provenance = lines.next().unwrap().to_string();
    let header = lines.next().unwrap();
    assert_eq!(header, "statement_id,issue,language,prob_favor,sigma,label");
    (
        provenance,
        lines
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect(),
    )
}

#[test]
fn analysis_with_stub_predictions_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let statements = stance_core::booklet::load_booklet(mini_booklet()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probs: Vec<f64> = statements
        .iter()
        .map(|_| rng.random_range(0..=1000) as f64 / 1000.0)
        .collect();
    let table = statements
        .iter()
        .zip(&probs)
        .map(|(s, &p)| (s.text.clone(), p))
        .collect();
    LookupModel::new("stub", table, None)
        .save(dir.path().join("stub.json"))
        .unwrap();
    let rows: Vec<(String, String, f64)> = statements
        .iter()
        .zip(&probs)
        .map(|(s, &p)| (s.issue.code().to_string(), s.language.code().to_string(), p))
        .collect();

    for (scope, per_language) in [("pooled", false), ("per-language", true)] {
        let out = format!("out-{scope}");
        let o = stance(
            dir.path(),
            &[
                "analyze",
                "--booklet",
                &mini_booklet(),
                "--model",
                "stub.json",
                "--sigma-scope",
                scope,
                "--output",
                &out,
            ],
        );
        ok(&o);
        let out = dir.path().join(out);
        let expected = oracle_labels(&rows, per_language);
        let (prov, csv) = csv_rows(&out.join("analysis_all.csv"));
        assert!(prov.starts_with("# config_hash="));
        assert_eq!(csv.len(), statements.len());
        for (i, row) in csv.iter().enumerate() {
            assert_eq!(row[0], statements[i].id);
            assert_eq!(row[3].parse::<f64>().unwrap(), probs[i]);
            let (sigma, label) = expected[&i.to_string()];
            assert!(
                (row[4].parse::<f64>().unwrap() - sigma).abs() < 1e-12,
                "{scope} row {i}"
            );
            assert_eq!(row[5], label, "{scope} row {i}: p={} σ={sigma}", probs[i]);
        }

        // the JSON aggregates agree with the CSV rows
        let json = read_json(&out.join("analysis_all.json"));
        assert_eq!(json["metadata"]["quantile_method"], "linear");
        let groups = json["report"]["groups"].as_array().unwrap();
        assert_eq!(groups.len(), if per_language { 12 } else { 4 });
        let total: u64 = groups.iter().map(|g| g["n"].as_u64().unwrap()).sum();
        assert_eq!(total as usize, csv.len());
        for g in groups {
            let members: Vec<&Vec<String>> = csv
                .iter()
                .filter(|r| r[1] == g["issue"] && (!per_language || r[2] == g["language"]))
                .collect();
            assert_eq!(members.len() as u64, g["n"].as_u64().unwrap());
            for label in ["FOR", "NEUTRAL", "AGAINST"] {
                let count = members.iter().filter(|r| r[5] == label).count() as u64;
                assert_eq!(g["label_counts"][label].as_u64().unwrap(), count);
            }
        }

        // one report and two plots per language view
        for tag in ["all", "de", "fr", "it"] {
            for f in [
                format!("analysis_{tag}.csv"),
                format!("analysis_{tag}.json"),
            ] {
                assert!(out.join(&f).is_file(), "{f}");
            }
            for f in [format!("box_{tag}.svg"), format!("labels_{tag}.svg")] {
                let svg = std::fs::read_to_string(out.join(&f)).unwrap();
                assert!(svg.contains("config_hash=") && svg.contains("<svg"), "{f}");
                for issue in ["FFI", "OASI-1", "OASI-2", "FAWT"] {
                    assert!(svg.contains(issue), "{f} lacks {issue}");
                }
            }
        }
        let (_, de) = csv_rows(&out.join("analysis_de.csv"));
        let de_all: Vec<_> = csv.iter().filter(|r| r[2] == "DE").cloned().collect();
        assert_eq!(de, de_all);
    }
}

#[test]
fn numeric_reports_survive_a_failing_plot() {
    let dir = tempfile::tempdir().unwrap();
    let statements = stance_core::booklet::load_booklet(mini_booklet()).unwrap();
    let table = statements.iter().map(|s| (s.text.clone(), 0.7)).collect();
    LookupModel::new("flat", table, None)
        .save(dir.path().join("flat.json"))
        .unwrap();
    // a directory where the plot file should go makes the write fail
    std::fs::create_dir_all(dir.path().join("out/box_all.svg")).unwrap();
    let o = stance(
        dir.path(),
        &[
            "analyze",
            "--booklet",
            &mini_booklet(),
            "--model",
            "flat.json",
            "--output",
            "out",
        ],
    );
    ok(&o);
    assert!(
        stderr(&o).contains("box_all.svg not written"),
        "{}",
        stderr(&o)
    );
    assert!(dir.path().join("out/analysis_all.csv").is_file());
    assert!(dir.path().join("out/labels_all.svg").is_file());
}

#[test]
fn missing_booklet_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = stance(
        dir.path(),
        &[
            "analyze",
            "--booklet",
            "no/such/booklet.jsonl",
            "--model",
            "whatever.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("no/such/booklet.jsonl"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn predict_prints_a_normalized_prediction() {
    let dir = tempfile::tempdir().unwrap();
    ok(&stance(
        dir.path(),
        &["train", "--corpus", &mini_corpus(), "--model", "r.model"],
    ));
    let e = &examples()[0];
    let o = stance(
        dir.path(),
        &[
            "predict",
            "--model",
            "r.model",
            "--question",
            &e.question,
            "--comment",
            &e.comment,
        ],
    );
    ok(&o);
    let p: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let (f, a) = (
        p["prob_favor"].as_f64().unwrap(),
        p["prob_against"].as_f64().unwrap(),
    );
    assert!((f + a - 1.0).abs() <= 1e-6);
    let expected = if f > 0.5 { "FAVOR" } else { "AGAINST" };
    assert_eq!(p["predicted_label"], expected);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| stance(dir.path(), args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["--version"]), Some(0));
    assert_eq!(code(&["train", "--no-such-flag"]), Some(1));
    assert_eq!(
        code(&["evaluate", "--corpus", &mini_corpus(), "--language", "rm"]),
        Some(1)
    );
    assert_eq!(code(&["train"]), Some(1));
    assert_eq!(code(&["train", "--corpus", "missing.jsonl"]), Some(2));
    assert_eq!(
        code(&[
            "evaluate",
            "--corpus",
            &mini_corpus(),
            "--model",
            "missing.model"
        ]),
        Some(3)
    );
    std::fs::write(dir.path().join("garbage.model"), "not a model").unwrap();
    assert_eq!(
        code(&[
            "predict",
            "--model",
            "garbage.model",
            "--question",
            "q",
            "--comment",
            "c"
        ]),
        Some(3)
    );
    // a model kind needs both labels in training
    let favor_only: Vec<String> = examples()
        .into_iter()
        .filter(|e| e.label == stance_core::StanceLabel::Favor)
        .map(|e| serde_json::to_string(&e).unwrap())
        .collect();
    std::fs::write(dir.path().join("favor.jsonl"), favor_only.join("\n")).unwrap();
    assert_eq!(code(&["train", "--corpus", "favor.jsonl"]), Some(2));
}

#[test]
fn upstream_directory_uses_its_split_tags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "[paths]\ncorpus = {:?}\n[corpus]\nadapter = {:?}\npartition = \"provided\"\n",
        repo("data/mini_xstance").display().to_string(),
        repo("configs/xstance-adapter.toml").display().to_string()
    );
    std::fs::write(dir.path().join("x.toml"), cfg).unwrap();
    ok(&stance(
        dir.path(),
        &["train", "--config", "x.toml", "--output", "out"],
    ));
    let m = read_json(&dir.path().join("out/train_metrics.json"));
    let count = |f: &str| {
        std::fs::read_to_string(repo("data/mini_xstance").join(f))
            .unwrap()
            .lines()
            .count() as u64
    };
    let s = &m["partition_sizes"];
    assert_eq!(s["train"].as_u64().unwrap(), count("train.jsonl"));
    assert_eq!(s["validation"].as_u64().unwrap(), count("valid.jsonl"));
    let tests: u64 = [
        "test_intra_target",
        "test_cross_question",
        "test_cross_topic",
    ]
    .iter()
    .map(|k| s[*k].as_u64().unwrap())
    .sum();
    assert_eq!(tests, count("test.jsonl"));
}

#[test]
fn language_flag_restricts_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    LookupModel::oracle(&examples())
        .save(dir.path().join("oracle.json"))
        .unwrap();
    let o = stance(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            &mini_corpus(),
            "--model",
            "oracle.json",
            "--language",
            "fr",
            "--output",
            "out",
        ],
    );
    ok(&o);
    let report = read_json(&dir.path().join("out/eval_report.json"));
    for (_, scores) in report["partitions"].as_object().unwrap() {
        assert!(scores.get("DE").is_none() && scores.get("IT").is_none());
    }
    assert!(report["partitions"]["intra_target"].get("FR").is_some());
}

#[test]
fn evaluation_artifacts_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    ok(&stance(
        dir.path(),
        &[
            "train",
            "--corpus",
            &mini_corpus(),
            "--seed",
            "3",
            "--output",
            "out",
        ],
    ));
    ok(&stance(
        dir.path(),
        &[
            "evaluate",
            "--corpus",
            &mini_corpus(),
            "--seed",
            "3",
            "--output",
            "out",
        ],
    ));
    let metrics = read_json(&dir.path().join("out/train_metrics.json"));
    let hash = metrics["metadata"]["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    let report = read_json(&dir.path().join("out/eval_report.json"));
    assert_eq!(report["metadata"]["config_hash"], hash.as_str());
    assert_eq!(report["metadata"]["seed"], 3);
    assert!(report["metadata"]["created_unix"].as_u64().is_some());
    let expected = format!(
        "# config_hash={hash},seed=3,code_version={}",
        env!("CARGO_PKG_VERSION")
    );
    let csv = std::fs::read_to_string(dir.path().join("out/eval_report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), expected);
    let table = std::fs::read_to_string(dir.path().join("out/eval_table.txt")).unwrap();
    assert!(table.trim_end().ends_with(&expected[2..]));

    // CSV rows agree with the JSON cells
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        let key = match f[2] {
            "mean_arithmetic" => "arithmetic_mean",
            "mean_harmonic" => "harmonic_mean",
            lang => lang,
        };
        let v = report["partitions"][f[1]][key].as_f64().unwrap();
        assert!((v - f[3].parse::<f64>().unwrap()).abs() < 1e-4);
    }
}

#[test]
fn stats_prints_and_writes_both_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let o = stance(
        dir.path(),
        &[
            "stats",
            "--corpus",
            &mini_corpus(),
            "--booklet",
            &mini_booklet(),
            "--output",
            "s",
        ],
    );
    ok(&o);
    assert!(stdout(&o).contains("examples: 500"));
    let s = read_json(&dir.path().join("s/stats.json"));
    assert_eq!(s["corpus"]["total_examples"], 500);
    assert_eq!(s["booklet"]["total"], 92);
    assert!(s["metadata"]["config_hash"].is_string());
    assert_eq!(stance(dir.path(), &["stats"]).status.code(), Some(1));
}

#[test]
fn tiny_encoder_trains_and_reloads_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo("configs/encoder-tiny.toml").display().to_string();
    let o = stance(
        dir.path(),
        &[
            "train",
            "--config",
            &cfg,
            "--corpus",
            &mini_corpus(),
            "--output",
            "out",
        ],
    );
    ok(&o);
    let m = read_json(&dir.path().join("out/train_metrics.json"));
    let epochs = m["training"]["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 12);
    assert_eq!(epochs.iter().filter(|e| e["selected"] == true).count(), 1);
    assert!(m["validation_macro_f1"].as_f64().unwrap() > 70.0, "{m}");
    assert!(dir
        .path()
        .join("models/encoder/stance_model.json")
        .is_file());
    let o = stance(
        dir.path(),
        &[
            "predict",
            "--model",
            "models/encoder",
            "--question",
            "q?",
            "--comment",
            "c",
        ],
    );
    ok(&o);
}
