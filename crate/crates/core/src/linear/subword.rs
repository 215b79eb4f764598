//! Bag of words and hashed character n-grams, averaged into one hidden vector and fed
//! to a two-class softmax layer (the fastText supervised architecture).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::check_training_set;
use super::persist::{self, PersistError};
use super::TrainError;
use crate::corpus::StanceExample;
use crate::evaluation::macro_f1;
use crate::scalar::Real;
use crate::text::{char_ngrams, pair_tokens, Composition};
use crate::types::{PredictionError, StanceClassifier, StanceLabel, StancePrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubwordConfig {
    pub dim: usize,
    /// shortest character n-gram; `max_n == 0` or `min_n > max_n` disables n-grams
    pub min_n: usize,
    pub max_n: usize,
    pub epochs: usize,
    pub lr: f64,
    /// hash buckets shared by all character n-grams
    pub buckets: usize,
    /// words seen fewer times get no word vector (their n-grams still count)
    pub min_count: usize,
    pub composition: Composition,
    /// keep the epoch with the best validation macro-F1
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig {
            dim: 100,
            min_n: 2,
            max_n: 5,
            epochs: 5,
            lr: 0.1,
            buckets: 2_000_000,
            min_count: 1,
            composition: Composition::QuestionAndComment,
            early_stopping: false,
            seed: 42,
        }
    }
}

impl SubwordConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, msg: &str| Err(TrainError::Config(format!("{field}: {msg}")));
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if self.buckets == 0 || self.buckets > u32::MAX as usize {
            return bad("buckets", "must be in 1..=2^32-1");
        }
        Ok(())
    }

    fn uses_ngrams(&self) -> bool {
        self.max_n > 0 && self.min_n <= self.max_n
    }
}

/// Per-epoch record of subword training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum InputRow {
    Word(u32),
    Bucket(u32),
}

const OUTPUT_CLASSES: usize = 2;
const AGAINST_ROW: usize = 0;
const FAVOR_ROW: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SubwordLinearModel<T> {
    pub training_config: SubwordConfig,
    words: Vec<String>,
    word_index: HashMap<String, u32>,
    /// `words.len() x dim`, row-major
    word_vectors: Vec<T>,
    /// n-gram rows that training touched; all others keep their seeded initial value
    bucket_vectors: HashMap<u32, Vec<T>>,
    /// `2 x dim`, rows in (AGAINST, FAVOR) order
    output: Vec<T>,
    pub training_log: Vec<EpochLog>,
}

/// 32-bit FNV-1a.
pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Initial value of an input row: uniform in (-1/dim, 1/dim), seeded by row identity.
fn init_row<T: Real>(seed: u64, salt: u64, index: u32, dim: usize) -> Vec<T> {
    let mix = seed
        ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    let bound = 1.0 / dim as f64;
    (0..dim)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect()
}

const WORD_SALT: u64 = 1;
const BUCKET_SALT: u64 = 2;

impl<T: Real> SubwordLinearModel<T> {
    fn dim(&self) -> usize {
        self.training_config.dim
    }

    fn input_rows(&self, question: &str, comment: &str) -> Vec<InputRow> {
        input_rows(&self.training_config, &self.word_index, question, comment)
    }

    fn bucket_row(&self, b: u32) -> std::borrow::Cow<'_, [T]> {
        match self.bucket_vectors.get(&b) {
            Some(v) => std::borrow::Cow::Borrowed(v.as_slice()),
            None => std::borrow::Cow::Owned(init_row(
                self.training_config.seed,
                BUCKET_SALT,
                b,
                self.dim(),
            )),
        }
    }

    fn hidden(&self, rows: &[InputRow]) -> Vec<T> {
        let dim = self.dim();
        let mut h = vec![T::zero(); dim];
        if rows.is_empty() {
            return h;
        }
        for row in rows {
            match *row {
                InputRow::Word(w) => {
                    let v = &self.word_vectors[w as usize * dim..(w as usize + 1) * dim];
                    h.iter_mut().zip(v).for_each(|(a, &b)| *a = *a + b);
                }
                InputRow::Bucket(b) => {
                    let v = self.bucket_row(b);
                    h.iter_mut().zip(v.iter()).for_each(|(a, &b)| *a = *a + b);
                }
            }
        }
        let n = T::of_usize(rows.len());
        h.iter_mut().for_each(|a| *a = *a / n);
        h
    }

    fn logits(&self, hidden: &[T]) -> [T; OUTPUT_CLASSES] {
        let dim = self.dim();
        let mut out = [T::zero(); OUTPUT_CLASSES];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.output[k * dim..(k + 1) * dim]
                .iter()
                .zip(hidden)
                .map(|(&w, &h)| w * h)
                .fold(T::zero(), |a, b| a + b);
        }
        out
    }

    pub fn predict_pair(&self, question: &str, comment: &str) -> StancePrediction {
        let rows = self.input_rows(question, comment);
        let z = self.logits(&self.hidden(&rows));
        StancePrediction::from_logits(
            z[AGAINST_ROW].to_f64().unwrap_or(0.0),
            z[FAVOR_ROW].to_f64().unwrap_or(0.0),
        )
    }

    /// Word vocabulary in index order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_vector(&self, word: &str) -> Option<&[T]> {
        let dim = self.dim();
        self.word_index
            .get(word)
            .map(|&w| &self.word_vectors[w as usize * dim..(w as usize + 1) * dim])
    }

    /// Output layer rows in (AGAINST, FAVOR) order.
    pub fn output_layer(&self) -> [&[T]; OUTPUT_CLASSES] {
        let dim = self.dim();
        [&self.output[..dim], &self.output[dim..]]
    }

    pub fn touched_buckets(&self) -> usize {
        self.bucket_vectors.len()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        #[derive(Serialize)]
        struct Meta<'a> {
            training_config: &'a SubwordConfig,
            words: &'a [String],
            training_log: &'a [EpochLog],
        }
        let mut w = persist::create(path.as_ref())?;
        persist::write_header::<_, T, _>(
            &mut w,
            "subword",
            &Meta {
                training_config: &self.training_config,
                words: &self.words,
                training_log: &self.training_log,
            },
        )?;
        persist::write_vec(&mut w, &self.word_vectors)?;
        persist::write_vec(&mut w, &self.output)?;
        let sorted: BTreeMap<_, _> = self.bucket_vectors.iter().collect();
        w.write_u64::<LittleEndian>(sorted.len() as u64)?;
        for (&b, v) in sorted {
            w.write_u32::<LittleEndian>(b)?;
            for &x in v {
                x.write_le(&mut w)?;
            }
        }
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        #[derive(Deserialize)]
        struct Meta {
            training_config: SubwordConfig,
            words: Vec<String>,
            training_log: Vec<EpochLog>,
        }
        let mut r = persist::open(path.as_ref())?;
        let meta: Meta = persist::read_header::<_, T, _>(&mut r, "subword")?;
        let dim = meta.training_config.dim;
        let word_vectors: Vec<T> = persist::read_vec(&mut r)?;
        let output: Vec<T> = persist::read_vec(&mut r)?;
        if word_vectors.len() != meta.words.len() * dim || output.len() != OUTPUT_CLASSES * dim {
            return Err(PersistError::Corrupt(
                "table sizes do not match the config".into(),
            ));
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut bucket_vectors = HashMap::with_capacity(n);
        for _ in 0..n {
            let b = r.read_u32::<LittleEndian>()?;
            let v = (0..dim)
                .map(|_| T::read_le(&mut r))
                .collect::<std::io::Result<Vec<T>>>()?;
            bucket_vectors.insert(b, v);
        }
        let word_index = meta
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(SubwordLinearModel {
            training_config: meta.training_config,
            words: meta.words,
            word_index,
            word_vectors,
            bucket_vectors,
            output,
            training_log: meta.training_log,
        })
    }
}

fn input_rows(
    config: &SubwordConfig,
    word_index: &HashMap<String, u32>,
    question: &str,
    comment: &str,
) -> Vec<InputRow> {
    let mut rows = Vec::new();
    for token in pair_tokens(question, comment, config.composition) {
        if let Some(&w) = word_index.get(&token) {
            rows.push(InputRow::Word(w));
        }
        if config.uses_ngrams() {
            for g in char_ngrams(&token, config.min_n, config.max_n) {
                let b = fnv1a_32(g.as_bytes()) % config.buckets as u32;
                rows.push(InputRow::Bucket(b));
            }
        }
    }
    rows
}

fn label_row(label: StanceLabel) -> usize {
    match label {
        StanceLabel::Favor => FAVOR_ROW,
        StanceLabel::Against => AGAINST_ROW,
    }
}

/// Trains the subword classifier with plain SGD and a linearly decaying learning rate.
/// Single-threaded, so the result depends only on the data, the config and its seed.
pub fn train_subword<T: Real>(
    train: &[StanceExample],
    validation: &[StanceExample],
    config: &SubwordConfig,
) -> Result<SubwordLinearModel<T>, TrainError> {
    config.validate()?;
    check_training_set(train)?;
    let dim = config.dim;

    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut words: Vec<String> = Vec::new();
    for e in train {
        for t in pair_tokens(&e.question, &e.comment, config.composition) {
            let c = counts.entry(t.clone()).or_insert(0);
            if *c == 0 {
                words.push(t);
            }
            *c += 1;
        }
    }
    words.retain(|w| counts[w] >= config.min_count.max(1));
    let word_index: HashMap<String, u32> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();
    let mut word_vectors = Vec::with_capacity(words.len() * dim);
    for i in 0..words.len() {
        word_vectors.extend(init_row::<T>(config.seed, WORD_SALT, i as u32, dim));
    }

    let mut model = SubwordLinearModel {
        training_config: config.clone(),
        words,
        word_index,
        word_vectors,
        bucket_vectors: HashMap::new(),
        output: vec![T::zero(); OUTPUT_CLASSES * dim],
        training_log: Vec::new(),
    };

    let inputs: Vec<Vec<InputRow>> = train
        .iter()
        .map(|e| input_rows(config, &model.word_index, &e.question, &e.comment))
        .collect();
    for rows in &inputs {
        for row in rows {
            if let InputRow::Bucket(b) = *row {
                model
                    .bucket_vectors
                    .entry(b)
                    .or_insert_with(|| init_row(config.seed, BUCKET_SALT, b, dim));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let total = (config.epochs * train.len()) as f64;
    let mut processed = 0usize;
    let mut best: Option<(f64, SubwordLinearModel<T>)> = None;
    let mut grad = vec![T::zero(); dim];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let lr = T::of(config.lr * (1.0 - processed as f64 / total));
            processed += 1;
            let rows = &inputs[i];
            if rows.is_empty() {
                continue;
            }
            let hidden = model.hidden(rows);
            let z = model.logits(&hidden);
            let m = z[0].max(z[1]);
            let e0 = (z[0] - m).exp();
            let e1 = (z[1] - m).exp();
            let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];
            let target = label_row(train[i].label);
            loss_sum -= probs[target].to_f64().unwrap_or(0.0).max(1e-300).ln();

            grad.iter_mut().for_each(|g| *g = T::zero());
            for (k, &p) in probs.iter().enumerate() {
                let indicator = if k == target { T::one() } else { T::zero() };
                let alpha = lr * (indicator - p);
                let out = &mut model.output[k * dim..(k + 1) * dim];
                for j in 0..dim {
                    grad[j] = grad[j] + alpha * out[j];
                    out[j] = out[j] + alpha * hidden[j];
                }
            }
            let scale = T::one() / T::of_usize(rows.len());
            grad.iter_mut().for_each(|g| *g = *g * scale);
            for row in rows {
                let target_row: &mut [T] = match *row {
                    InputRow::Word(w) => {
                        &mut model.word_vectors[w as usize * dim..(w as usize + 1) * dim]
                    }
                    InputRow::Bucket(b) => model
                        .bucket_vectors
                        .get_mut(&b)
                        .expect("bucket rows are materialized before training"),
                };
                target_row
                    .iter_mut()
                    .zip(&grad)
                    .for_each(|(v, &g)| *v = *v + g);
            }
        }

        let validation_macro_f1 = if validation.is_empty() {
            None
        } else {
            let preds: Vec<StanceLabel> = validation
                .iter()
                .map(|e| model.predict_pair(&e.question, &e.comment).predicted_label)
                .collect();
            let gold: Vec<StanceLabel> = validation.iter().map(|e| e.label).collect();
            macro_f1::<f64>(&preds, &gold).ok()
        };
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            validation_macro_f1,
        };
        log::debug!("subword epoch {epoch}: {entry:?}");
        model.training_log.push(entry);

        if config.early_stopping {
            if let Some(f1) = validation_macro_f1 {
                if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                    best = Some((f1, model.clone()));
                }
            }
        }
    }

    if let Some((_, mut chosen)) = best {
        chosen.training_log = model.training_log;
        return Ok(chosen);
    }
    Ok(model)
}

impl<T: Real> StanceClassifier for SubwordLinearModel<T> {
    fn model_id(&self) -> String {
        "subword".to_string()
    }

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        Ok(self.predict_pair(question, comment))
    }
}
