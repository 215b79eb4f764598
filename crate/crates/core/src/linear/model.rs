use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::calibration::PlattCalibration;
use super::hashing::{featurize, HashedFeatureVector};
use super::persist::{self, PersistError};
use super::solvers::{ridge, svm_squared_hinge, CompactDesign};
use super::TrainError;
use crate::corpus::StanceExample;
use crate::scalar::Real;
use crate::text::Composition;
use crate::types::{PredictionError, StanceClassifier, StanceLabel, StancePrediction};

pub const DEFAULT_HASH_DIMENSION: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Ridge,
    Svm,
}

impl std::fmt::Display for LinearKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinearKind::Ridge => "ridge",
            LinearKind::Svm => "svm",
        })
    }
}

/// Hyperparameters of the hashed linear models. Defaults follow scikit-learn's
/// `FeatureHasher`, `RidgeClassifier` and `LinearSVC`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub hash_dimension: usize,
    pub composition: Composition,
    /// ridge penalty
    pub alpha: f64,
    /// SVM inverse regularization strength
    pub c: f64,
    pub fit_intercept: bool,
    /// relative residual tolerance of the ridge solver
    pub ridge_tol: f64,
    /// projected-gradient tolerance of the SVM solver
    pub svm_tol: f64,
    pub max_iter: usize,
    /// fit the logistic score calibration (otherwise the identity map is used)
    pub calibrate: bool,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            hash_dimension: DEFAULT_HASH_DIMENSION,
            composition: Composition::QuestionAndComment,
            alpha: 1.0,
            c: 1.0,
            fit_intercept: true,
            ridge_tol: 1e-6,
            svm_tol: 1e-4,
            max_iter: 1000,
            calibrate: true,
            seed: 42,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, msg: &str| Err(TrainError::Config(format!("{field}: {msg}")));
        if self.hash_dimension == 0 || self.hash_dimension > u32::MAX as usize {
            return bad("hash_dimension", "must be in 1..=2^32-1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha", "must be positive");
        }
        if !(self.c > 0.0) {
            return bad("c", "must be positive");
        }
        if !(self.ridge_tol > 0.0) || !(self.svm_tol > 0.0) {
            return bad("tol", "must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be at least 1");
        }
        Ok(())
    }
}

/// Training diagnostics kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub converged: bool,
    pub calibration_examples: usize,
}

/// Feature-hashed ridge or SVM classifier with a logistic score calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStanceModel<T> {
    pub kind: LinearKind,
    pub hash_dimension: usize,
    /// dense, one weight per hash bucket; positive scores favor FAVOR
    pub weights: Vec<T>,
    pub bias: T,
    pub calibration: PlattCalibration,
    pub training_config: LinearConfig,
    pub solver: SolverReport,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: LinearKind,
    hash_dimension: usize,
    bias: f64,
    calibration: PlattCalibration,
    training_config: LinearConfig,
    solver: SolverReport,
}

pub(crate) fn check_training_set(train: &[StanceExample]) -> Result<(), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let first = train[0].label;
    if train.iter().all(|e| e.label == first) {
        return Err(TrainError::SingleClass(first));
    }
    Ok(())
}

/// Trains a hashed linear classifier. Scores are calibrated on `validation`, or on
/// the training set when `validation` is empty.
pub fn train_linear<T: Real>(
    train: &[StanceExample],
    validation: &[StanceExample],
    kind: LinearKind,
    config: &LinearConfig,
) -> Result<LinearStanceModel<T>, TrainError> {
    config.validate()?;
    check_training_set(train)?;
    let xs: Vec<HashedFeatureVector<T>> = train
        .iter()
        .map(|e| {
            featurize(
                &e.question,
                &e.comment,
                config.hash_dimension,
                config.composition,
            )
        })
        .collect();
    let y: Vec<T> = train.iter().map(|e| T::of(e.label.sign())).collect();
    let design = CompactDesign::new(&xs);

    let solution = match kind {
        LinearKind::Ridge => ridge(
            &design,
            &y,
            T::of(config.alpha),
            config.fit_intercept,
            T::of(config.ridge_tol),
            config.max_iter,
        ),
        LinearKind::Svm => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            svm_squared_hinge(
                &design,
                &y,
                T::of(config.c),
                config.fit_intercept,
                T::of(config.svm_tol),
                config.max_iter,
                &mut rng,
            )
        }
    };
    if !solution.converged {
        log::warn!(
            "{kind} solver stopped after {} iterations without converging",
            solution.iterations
        );
    }

    let mut model = LinearStanceModel {
        kind,
        hash_dimension: config.hash_dimension,
        weights: design.expand(&solution.weights, config.hash_dimension),
        bias: solution.bias,
        calibration: PlattCalibration::default(),
        training_config: config.clone(),
        solver: SolverReport {
            iterations: solution.iterations,
            converged: solution.converged,
            calibration_examples: 0,
        },
    };

    if config.calibrate {
        let calib = if validation.is_empty() {
            train
        } else {
            validation
        };
        let scores: Vec<f64> = calib
            .iter()
            .map(|e| {
                model
                    .decision_score(&e.question, &e.comment)
                    .to_f64()
                    .unwrap_or(0.0)
            })
            .collect();
        let positive: Vec<bool> = calib
            .iter()
            .map(|e| e.label == StanceLabel::Favor)
            .collect();
        model.calibration = PlattCalibration::fit(&scores, &positive);
        model.solver.calibration_examples = calib.len();
    }
    Ok(model)
}

impl<T: Real> LinearStanceModel<T> {
    pub fn featurize(&self, question: &str, comment: &str) -> HashedFeatureVector<T> {
        featurize(
            question,
            comment,
            self.hash_dimension,
            self.training_config.composition,
        )
    }

    pub fn score_features(&self, x: &HashedFeatureVector<T>) -> T {
        x.dot(&self.weights) + self.bias
    }

    /// Raw linear score; positive leans FAVOR.
    pub fn decision_score(&self, question: &str, comment: &str) -> T {
        self.score_features(&self.featurize(question, comment))
    }

    pub fn predict_features(&self, x: &HashedFeatureVector<T>) -> StancePrediction {
        let score = self.score_features(x).to_f64().unwrap_or(0.0);
        StancePrediction::from_favor_probability(self.calibration.probability(score))
    }

    pub fn predict_pair(&self, question: &str, comment: &str) -> StancePrediction {
        self.predict_features(&self.featurize(question, comment))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersistError> {
        let mut w = persist::create(path.as_ref())?;
        let meta = Meta {
            kind: self.kind,
            hash_dimension: self.hash_dimension,
            bias: self.bias.to_f64().unwrap_or(0.0),
            calibration: self.calibration,
            training_config: self.training_config.clone(),
            solver: self.solver.clone(),
        };
        persist::write_header::<_, T, _>(&mut w, "linear", &meta)?;
        self.bias.write_le(&mut w)?;
        let nonzero: Vec<(u32, T)> = self
            .weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(i, &w)| (i as u32, w))
            .collect();
        w.write_u64::<LittleEndian>(nonzero.len() as u64)?;
        for (i, v) in nonzero {
            w.write_u32::<LittleEndian>(i)?;
            v.write_le(&mut w)?;
        }
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersistError> {
        let mut r = persist::open(path.as_ref())?;
        let meta: Meta = persist::read_header::<_, T, _>(&mut r, "linear")?;
        let bias = T::read_le(&mut r)?;
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut weights = vec![T::zero(); meta.hash_dimension];
        for _ in 0..n {
            let i = r.read_u32::<LittleEndian>()? as usize;
            let v = T::read_le(&mut r)?;
            *weights
                .get_mut(i)
                .ok_or_else(|| PersistError::Corrupt(format!("weight index {i} out of range")))? =
                v;
        }
        Ok(LinearStanceModel {
            kind: meta.kind,
            hash_dimension: meta.hash_dimension,
            weights,
            bias,
            calibration: meta.calibration,
            training_config: meta.training_config,
            solver: meta.solver,
        })
    }
}

impl<T: Real> StanceClassifier for LinearStanceModel<T> {
    fn model_id(&self) -> String {
        self.kind.to_string()
    }

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        Ok(self.predict_pair(question, comment))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Language;
    use proptest::prelude::*;

    pub(crate) fn separable(n: usize) -> Vec<StanceExample> {
        let favor = ["gut", "richtig", "unterstützen", "wichtig", "super"];
        let against = ["schlecht", "falsch", "ablehnen", "unnötig", "teuer"];
        (0..n)
            .map(|i| {
                let pos = i % 2 == 0;
                let words = if pos { &favor } else { &against };
                StanceExample {
                    id: i.to_string(),
                    question: format!("Soll Vorlage {} angenommen werden?", i % 3),
                    comment: format!("{} und {}", words[i % 5], words[(i / 2 + 1) % 5]),
                    label: if pos {
                        StanceLabel::Favor
                    } else {
                        StanceLabel::Against
                    },
                    language: Language::De,
                    topic: Some("t".into()),
                    question_id: (i % 3).to_string(),
                    split: None,
                }
            })
            .collect()
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let train = separable(20);
        for kind in [LinearKind::Ridge, LinearKind::Svm] {
            let m = train_linear::<f64>(&train, &[], kind, &LinearConfig::default()).unwrap();
            for e in &train {
                let p = m.predict_pair(&e.question, &e.comment);
                assert_eq!(p.predicted_label, e.label, "{kind} on {}", e.comment);
                let s = m.decision_score(&e.question, &e.comment);
                assert_eq!(s > 0.0, e.label == StanceLabel::Favor);
            }
        }
    }

    #[test]
    fn f32_models_train_too() {
        let train = separable(20);
        let m =
            train_linear::<f32>(&train, &[], LinearKind::Svm, &LinearConfig::default()).unwrap();
        assert!(train
            .iter()
            .all(|e| m.predict_pair(&e.question, &e.comment).predicted_label == e.label));
    }

    #[test]
    fn single_class_and_empty_sets_are_rejected() {
        let mut train = separable(4);
        for e in &mut train {
            e.label = StanceLabel::Against;
        }
        assert!(matches!(
            train_linear::<f64>(&train, &[], LinearKind::Ridge, &LinearConfig::default()),
            Err(TrainError::SingleClass(StanceLabel::Against))
        ));
        assert!(matches!(
            train_linear::<f64>(&[], &[], LinearKind::Svm, &LinearConfig::default()),
            Err(TrainError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn retraining_is_bit_identical() {
        let train = separable(30);
        let cfg = LinearConfig::default();
        for kind in [LinearKind::Ridge, LinearKind::Svm] {
            let a = train_linear::<f64>(&train, &[], kind, &cfg).unwrap();
            let b = train_linear::<f64>(&train, &[], kind, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn save_load_roundtrip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = train_linear::<f64>(
            &separable(12),
            &[],
            LinearKind::Ridge,
            &LinearConfig::default(),
        )
        .unwrap();
        m.save(&path).unwrap();
        assert_eq!(LinearStanceModel::<f64>::load(&path).unwrap(), m);
        assert!(LinearStanceModel::<f32>::load(&path).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 2;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            LinearStanceModel::<f64>::load(&path),
            Err(PersistError::SchemaVersion { found: 2, .. })
        ));
    }

    #[test]
    fn comment_only_mode_ignores_question() {
        let cfg = LinearConfig {
            composition: Composition::CommentOnly,
            ..LinearConfig::default()
        };
        let m = train_linear::<f64>(&separable(20), &[], LinearKind::Ridge, &cfg).unwrap();
        assert_eq!(
            m.decision_score("eins", "gut und richtig"),
            m.decision_score("zwei drei", "gut und richtig")
        );
    }

    #[test]
    fn invalid_config_names_the_field() {
        let cfg = LinearConfig {
            alpha: -1.0,
            ..LinearConfig::default()
        };
        let err = train_linear::<f64>(&separable(4), &[], LinearKind::Ridge, &cfg).unwrap_err();
        assert!(err.to_string().contains("alpha"));
    }

    fn small_model(kind: LinearKind) -> LinearStanceModel<f64> {
        let cfg = LinearConfig {
            fit_intercept: false,
            calibrate: false,
            ..LinearConfig::default()
        };
        train_linear(&separable(24), &[], kind, &cfg).unwrap()
    }

    proptest! {
        #[test]
        fn predictions_are_normalized(q in "\\PC{0,40}", c in "\\PC{0,80}") {
            for kind in [LinearKind::Ridge, LinearKind::Svm] {
                let m = small_model(kind);
                let p = m.predict_pair(&q, &c);
                prop_assert!((p.prob_favor + p.prob_against - 1.0).abs() <= 1e-6);
                prop_assert!(p.prob_favor > 0.0 && p.prob_favor < 1.0);
                prop_assert_eq!(p.predicted_label == StanceLabel::Favor, p.prob_favor >= 0.5);
            }
        }

        #[test]
        fn positive_scaling_never_flips_bias_free_scores(c in "[a-zäöü ]{1,60}", scale in 0.01f64..100.0) {
            for kind in [LinearKind::Ridge, LinearKind::Svm] {
                let m = small_model(kind);
                prop_assert_eq!(m.bias, 0.0);
                let x = m.featurize("Soll Vorlage 1 angenommen werden?", &c);
                let s = m.score_features(&x);
                let scaled = m.score_features(&x.scaled(scale));
                prop_assert_eq!(s > 0.0, scaled > 0.0);
                prop_assert_eq!(s < 0.0, scaled < 0.0);
            }
        }
    }
}
