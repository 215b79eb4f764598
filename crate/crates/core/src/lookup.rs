//! A model that answers from a fixed table of favor probabilities keyed by comment text.
//! Useful for replaying externally computed predictions and for oracle runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::StanceExample;
use crate::types::{PredictionError, StanceClassifier, StanceLabel, StancePrediction};

pub const LOOKUP_KIND: &str = "lookup";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupModel {
    pub kind: String,
    pub id: String,
    pub probabilities: BTreeMap<String, f64>,
    /// answer for comments missing from the table; `None` makes them an error
    #[serde(default)]
    pub default: Option<f64>,
}

impl LookupModel {
    pub fn new(
        id: impl Into<String>,
        probabilities: BTreeMap<String, f64>,
        default: Option<f64>,
    ) -> Self {
        LookupModel {
            kind: LOOKUP_KIND.to_string(),
            id: id.into(),
            probabilities,
            default,
        }
    }

    /// Returns gold labels as certain predictions.
    pub fn oracle(examples: &[StanceExample]) -> Self {
        let table = examples
            .iter()
            .map(|e| {
                let p = match e.label {
                    StanceLabel::Favor => 1.0,
                    StanceLabel::Against => 0.0,
                };
                (e.comment.clone(), p)
            })
            .collect();
        LookupModel::new("oracle", table, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let m: LookupModel = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if m.kind != LOOKUP_KIND {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("expected a `{LOOKUP_KIND}` model, found `{}`", m.kind),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), std::io::Error> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("serializable"),
        )
    }
}

impl StanceClassifier for LookupModel {
    fn model_id(&self) -> String {
        self.id.clone()
    }

    fn predict(&self, _question: &str, comment: &str) -> Result<StancePrediction, PredictionError> {
        self.probabilities
            .get(comment)
            .copied()
            .or(self.default)
            .map(StancePrediction::from_favor_probability)
            .ok_or_else(|| PredictionError(format!("no stored prediction for comment {comment:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Language;

    #[test]
    fn oracle_reproduces_gold_and_roundtrips() {
        let ex = vec![
            crate::corpus::example("1", "q", "t", Language::De, StanceLabel::Favor),
            crate::corpus::example("2", "q", "t", Language::Fr, StanceLabel::Against),
        ];
        let m = LookupModel::oracle(&ex);
        for e in &ex {
            assert_eq!(
                m.predict(&e.question, &e.comment).unwrap().predicted_label,
                e.label
            );
        }
        assert!(m.predict("q", "unknown").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        assert_eq!(LookupModel::load(&p).unwrap(), m);
    }
}
