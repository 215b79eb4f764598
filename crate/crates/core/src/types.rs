use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Corpus languages. Romansh is not supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "FR")]
    Fr,
    #[serde(rename = "IT")]
    It,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::De, Language::Fr, Language::It];

    pub fn code(self) -> &'static str {
        match self {
            Language::De => "DE",
            Language::Fr => "FR",
            Language::It => "IT",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language `{0}` (expected one of de, fr, it)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "de" | "german" => Ok(Language::De),
            "fr" | "french" => Ok(Language::Fr),
            "it" | "italian" => Ok(Language::It),
            _ => Err(UnknownLanguage(s.to_string())),
        }
    }
}

/// Binary stance label of the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StanceLabel {
    #[serde(rename = "FAVOR")]
    Favor,
    #[serde(rename = "AGAINST")]
    Against,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 2] = [StanceLabel::Favor, StanceLabel::Against];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "FAVOR",
            StanceLabel::Against => "AGAINST",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            StanceLabel::Favor => StanceLabel::Against,
            StanceLabel::Against => StanceLabel::Favor,
        }
    }

    /// +1 for FAVOR, -1 for AGAINST.
    pub fn sign(self) -> f64 {
        match self {
            StanceLabel::Favor => 1.0,
            StanceLabel::Against => -1.0,
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Smallest probability a prediction may carry; keeps both probabilities inside (0, 1).
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Normalized two-class output of any stance model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StancePrediction {
    pub prob_favor: f64,
    pub prob_against: f64,
    pub predicted_label: StanceLabel,
}

impl StancePrediction {
    /// Builds a prediction from the favor probability. A favor probability of exactly 0.5
    /// is labeled FAVOR.
    pub fn from_favor_probability(p: f64) -> Self {
        let p = if p.is_nan() { 0.5 } else { p };
        let prob_favor = p.clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        let predicted_label = if prob_favor >= 0.5 {
            StanceLabel::Favor
        } else {
            StanceLabel::Against
        };
        StancePrediction {
            prob_favor,
            prob_against: 1.0 - prob_favor,
            predicted_label,
        }
    }

    /// Softmax over the two logits, in (AGAINST, FAVOR) order.
    pub fn from_logits(against: f64, favor: f64) -> Self {
        // softmax over two logits is the logistic of their difference
        Self::from_favor_probability(crate::scalar::sigmoid(favor - against))
    }
}

/// Error returned by a model backend that could not score an input.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prediction failed: {0}")]
pub struct PredictionError(pub String);

/// Anything that maps a (question, comment) pair to a stance prediction.
///
/// Models only ever see the two texts, never a gold label.
pub trait StanceClassifier: Send + Sync {
    fn model_id(&self) -> String;

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError>;

    /// Elementwise equal to [`StanceClassifier::predict`], order preserved.
    fn predict_batch(
        &self,
        pairs: &[(&str, &str)],
    ) -> Result<Vec<StancePrediction>, PredictionError> {
        pairs.iter().map(|(q, c)| self.predict(q, c)).collect()
    }
}

impl<C: StanceClassifier + ?Sized> StanceClassifier for &C {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        (**self).predict(question, comment)
    }

    fn predict_batch(
        &self,
        pairs: &[(&str, &str)],
    ) -> Result<Vec<StancePrediction>, PredictionError> {
        (**self).predict_batch(pairs)
    }
}

impl<C: StanceClassifier + ?Sized> StanceClassifier for Box<C> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }

    fn predict(&self, question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        (**self).predict(question, comment)
    }

    fn predict_batch(
        &self,
        pairs: &[(&str, &str)],
    ) -> Result<Vec<StancePrediction>, PredictionError> {
        (**self).predict_batch(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_parsing_is_case_insensitive() {
        assert_eq!("de".parse::<Language>().unwrap(), Language::De);
        assert_eq!(" FR ".parse::<Language>().unwrap(), Language::Fr);
        assert_eq!("It".parse::<Language>().unwrap(), Language::It);
        assert!("rm".parse::<Language>().is_err());
    }

    #[test]
    fn tie_goes_to_favor() {
        let p = StancePrediction::from_favor_probability(0.5);
        assert_eq!(p.predicted_label, StanceLabel::Favor);
        let p = StancePrediction::from_logits(1.0, 1.0);
        assert_eq!(p.predicted_label, StanceLabel::Favor);
        assert_eq!(p.prob_favor, 0.5);
    }

    #[test]
    fn probabilities_stay_open_interval() {
        for p in [0.0, 1.0, -3.0, 7.0, f64::NAN] {
            let pred = StancePrediction::from_favor_probability(p);
            assert!(pred.prob_favor > 0.0 && pred.prob_favor < 1.0);
            assert!((pred.prob_favor + pred.prob_against - 1.0).abs() <= 1e-6);
        }
        let pred = StancePrediction::from_logits(-800.0, 800.0);
        assert!(pred.prob_favor < 1.0);
        assert_eq!(pred.predicted_label, StanceLabel::Favor);
    }
}
