use std::collections::HashMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stance_core::corpus::{
    partition, PartitionConfig, PartitionStrategy, PartitionedDataset, StanceExample,
};
use stance_core::synthetic::{stance_corpus, SyntheticCorpusConfig};
use stance_core::{StanceClassifier, StanceLabel};
use stance_encoder::{
    fine_tune, fine_tune_checkpoint, BertConfig, Checkpoint, EncoderConfig, EncoderError,
    EncoderStanceModel, LocalWeights,
};

fn corpus(n: usize, seed: u64) -> Vec<StanceExample> {
    stance_corpus(&SyntheticCorpusConfig {
        examples: n,
        seed,
        ..SyntheticCorpusConfig::default()
    })
}

fn texts(examples: &[StanceExample]) -> Vec<&str> {
    examples
        .iter()
        .flat_map(|e| [e.question.as_str(), e.comment.as_str()])
        .collect()
}

fn config(epochs: usize, seed: u64) -> EncoderConfig {
    EncoderConfig {
        pretrained_model_id: "scratch".into(),
        max_sequence_length: 64,
        learning_rate: 1e-3,
        batch_size: 16,
        epochs,
        seed,
        ..EncoderConfig::default()
    }
}

fn train_tiny(
    train: &[StanceExample],
    validation: &[StanceExample],
    cfg: &EncoderConfig,
) -> EncoderStanceModel {
    let ckpt = Checkpoint::from_scratch(texts(train), true, BertConfig::tiny).unwrap();
    fine_tune_checkpoint(ckpt, train, validation, cfg).unwrap()
}

fn dataset() -> &'static PartitionedDataset {
    static DATA: OnceLock<PartitionedDataset> = OnceLock::new();
    DATA.get_or_init(|| {
        partition(
            &corpus(600, 11),
            PartitionStrategy::Derive,
            &PartitionConfig::default(),
        )
        .unwrap()
    })
}

fn shared_model() -> &'static EncoderStanceModel {
    static MODEL: OnceLock<EncoderStanceModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let d = dataset();
        let cfg = EncoderConfig {
            batch_size: 8,
            ..config(4, 1)
        };
        train_tiny(&d.train, &d.validation, &cfg)
    })
}

#[test]
fn one_epoch_on_hundred_examples_logs_once() {
    let data = corpus(100, 1);
    let m = train_tiny(&data, &[], &config(1, 0));
    assert_eq!(m.training_log().len(), 1);
    let e = &m.training_log()[0];
    assert_eq!(e.epoch, 1);
    assert_eq!(e.steps, 7);
    assert!(e.selected);
    assert!(e.validation_macro_f1.is_none());
    assert!(e.mean_loss.is_finite());
}

#[test]
fn learns_cue_words_and_selects_best_epoch() {
    let d = dataset();
    let cfg = EncoderConfig {
        batch_size: 8,
        ..config(6, 2)
    };
    let m = train_tiny(&d.train, &d.validation, &cfg);
    let log = m.training_log();
    assert_eq!(log.len(), 6);
    let best = log
        .iter()
        .map(|e| e.validation_macro_f1.unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen: Vec<_> = log.iter().filter(|e| e.selected).collect();
    assert_eq!(chosen.len(), 1);
    assert_eq!(chosen[0].validation_macro_f1, Some(best));
    // the returned weights are the selected epoch's
    let preds: Vec<StanceLabel> = m
        .predict_batch(
            &d.validation
                .iter()
                .map(|e| (e.question.as_str(), e.comment.as_str()))
                .collect::<Vec<_>>(),
        )
        .unwrap()
        .iter()
        .map(|p| p.predicted_label)
        .collect();
    let gold: Vec<StanceLabel> = d.validation.iter().map(|e| e.label).collect();
    let f1: f64 = stance_core::evaluation::macro_f1(&preds, &gold).unwrap();
    assert_eq!(f1, best);
    assert!(best > 70.0, "{best}");
}

#[test]
fn identical_seed_gives_identical_trajectory() {
    let d = dataset();
    let a = train_tiny(&d.train, &d.validation, &config(2, 5));
    let b = train_tiny(&d.train, &d.validation, &config(2, 5));
    assert_eq!(a.training_log(), b.training_log());
    let probe: Vec<(&str, &str)> = d
        .test_intra_target
        .iter()
        .map(|e| (e.question.as_str(), e.comment.as_str()))
        .collect();
    assert_eq!(
        a.predict_batch(&probe).unwrap(),
        b.predict_batch(&probe).unwrap()
    );
}

#[test]
fn batch_equals_single_for_random_pairs() {
    let m = shared_model();
    let pool = corpus(300, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<(&str, &str)> = (0..50)
        .map(|_| {
            let q = &pool[rng.random_range(0..pool.len())];
            let c = &pool[rng.random_range(0..pool.len())];
            (q.question.as_str(), c.comment.as_str())
        })
        .collect();
    let batch = m.predict_batch(&pairs).unwrap();
    assert_eq!(batch.len(), 50);
    for (p, b) in pairs.iter().zip(&batch) {
        assert_eq!(m.predict(p.0, p.1).unwrap(), *b);
    }
}

#[test]
fn duplicates_and_empty_batches() {
    let m = shared_model();
    assert!(m.predict_batch(&[]).unwrap().is_empty());
    let e = &dataset().test_intra_target[0];
    let dup = vec![(e.question.as_str(), e.comment.as_str()); 40];
    let out = m.predict_batch(&dup).unwrap();
    assert!(out.iter().all(|p| *p == out[0]));
    assert_eq!(out[0], m.predict(&e.question, &e.comment).unwrap());
}

#[test]
fn long_inputs_are_truncated_comment_first() {
    let m = shared_model();
    let e = &dataset().train[0];
    let long_comment = e.comment.repeat(200);
    let p = m.predict(&e.question, &long_comment).unwrap();
    assert!((p.prob_favor + p.prob_against - 1.0).abs() <= 1e-6);

    let enc = m.encode(&e.question, &long_comment);
    assert_eq!(enc.len(), 64);
    let q = m.tokenizer().tokenize_ids(&e.question);
    assert_eq!(&enc.input_ids[1..=q.len()], q.as_slice());
    // a question longer than the limit is cut, never an error
    let long_q = e.question.repeat(100);
    assert_eq!(m.encode(&long_q, &long_comment).len(), 64);
    m.predict(&long_q, &long_comment).unwrap();
    m.predict("", "").unwrap();
}

#[test]
fn save_and_load_roundtrip() {
    let m = shared_model();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    for f in [
        "model.safetensors",
        "config.json",
        "encoder_config.json",
        "training_log.jsonl",
        "vocab.txt",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let loaded = EncoderStanceModel::load(dir.path()).unwrap();
    assert_eq!(loaded.config(), m.config());
    assert_eq!(loaded.training_log(), m.training_log());
    assert_eq!(loaded.labels(), ["AGAINST", "FAVOR"]);
    let probe: Vec<(&str, &str)> = dataset()
        .test_cross_topic
        .iter()
        .map(|e| (e.question.as_str(), e.comment.as_str()))
        .collect();
    assert_eq!(
        loaded.predict_batch(&probe).unwrap(),
        m.predict_batch(&probe).unwrap()
    );
}

#[test]
fn fine_tune_from_checkpoint_directory() {
    let data = corpus(120, 4);
    let dir = tempfile::tempdir().unwrap();
    let ckpt_dir = dir.path().join("tiny-bert");
    std::fs::create_dir_all(&ckpt_dir).unwrap();
    // write a headless encoder checkpoint with bare parameter names
    let scratch = Checkpoint::from_scratch(texts(&data), true, BertConfig::tiny).unwrap();
    let bert = stance_encoder::bert::Bert::random(&scratch.config, 9).unwrap();
    let tensors: HashMap<String, candle_core::Tensor> = bert
        .snapshot()
        .unwrap()
        .into_iter()
        .filter(|(k, _)| !k.starts_with("classifier"))
        .map(|(k, v)| (k.trim_start_matches("bert.").to_string(), v))
        .collect();
    candle_core::safetensors::save(&tensors, ckpt_dir.join("model.safetensors")).unwrap();
    std::fs::write(
        ckpt_dir.join("config.json"),
        serde_json::to_string(&scratch.config).unwrap(),
    )
    .unwrap();
    scratch
        .tokenizer
        .save_vocab(&ckpt_dir.join("vocab.txt"))
        .unwrap();

    let cfg = EncoderConfig {
        pretrained_model_id: ckpt_dir.to_string_lossy().into_owned(),
        lowercase: Some(true),
        ..config(1, 0)
    };
    let m = fine_tune(
        &data,
        &[],
        &cfg,
        &LocalWeights::new(dir.path().join("cache")),
    )
    .unwrap();
    assert_eq!(m.training_log().len(), 1);
    assert_eq!(m.model_id(), format!("encoder:{}", cfg.pretrained_model_id));
}

#[test]
fn unavailable_pretrained_model_is_reported() {
    let data = corpus(50, 4);
    let dir = tempfile::tempdir().unwrap();
    let cfg = EncoderConfig {
        pretrained_model_id: "no-such/model".into(),
        ..config(1, 0)
    };
    let err = fine_tune(&data, &[], &cfg, &LocalWeights::new(dir.path())).unwrap_err();
    assert!(
        matches!(err, EncoderError::PretrainedUnavailable { .. }),
        "{err}"
    );
}

#[test]
fn training_set_must_have_both_labels() {
    let data: Vec<_> = corpus(60, 4)
        .into_iter()
        .filter(|e| e.label == StanceLabel::Favor)
        .collect();
    let ckpt = Checkpoint::from_scratch(texts(&data), true, BertConfig::tiny).unwrap();
    assert!(fine_tune_checkpoint(ckpt, &data, &[], &config(1, 0)).is_err());
    let ckpt = Checkpoint::from_scratch(["x"], true, BertConfig::tiny).unwrap();
    assert!(matches!(
        fine_tune_checkpoint(ckpt, &[], &[], &config(1, 0)),
        Err(EncoderError::EmptyTrainingSet)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_are_normalized_and_deterministic(q in "\\PC{0,60}", c in "\\PC{0,400}") {
        let m = shared_model();
        let a = m.predict(&q, &c).unwrap();
        prop_assert!((a.prob_favor + a.prob_against - 1.0).abs() <= 1e-6);
        prop_assert!(a.prob_favor > 0.0 && a.prob_favor < 1.0);
        prop_assert_eq!(a, m.predict(&q, &c).unwrap());
    }
}
