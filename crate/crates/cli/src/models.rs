//! Loading any persisted model behind the classifier trait.

use std::io::Read;
use std::path::Path;

use stance_core::linear::persist::MAGIC;
use stance_core::linear::{peek_kind, PersistError};
use stance_core::lookup::LookupModel;
use stance_core::{LinearModel, LinearModel32, StanceClassifier, SubwordModel, SubwordModel64};
use stance_encoder::EncoderStanceModel;

use crate::error::CliError;

fn has_magic(path: &Path) -> bool {
    let mut buf = [0u8; 8];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut buf))
        .is_ok()
        && &buf == MAGIC
}

/// Loads an encoder directory, a binary linear or subword container (either scalar
/// width) or a JSON lookup table.
pub fn load_model(path: &Path) -> Result<Box<dyn StanceClassifier>, CliError> {
    if !path.exists() {
        return Err(CliError::Model(format!(
            "model not found: {}",
            path.display()
        )));
    }
    let ctx = |e: &dyn std::fmt::Display| {
        CliError::Model(format!("cannot load model {}: {e}", path.display()))
    };
    if path.is_dir() {
        if !EncoderStanceModel::is_model_dir(path) {
            return Err(CliError::Model(format!(
                "{} is a directory but not a saved encoder model",
                path.display()
            )));
        }
        return EncoderStanceModel::load(path)
            .map(|m| Box::new(m) as Box<dyn StanceClassifier>)
            .map_err(|e| ctx(&e));
    }
    if has_magic(path) {
        let kind = peek_kind(path).map_err(|e| ctx(&e))?;
        let model: Box<dyn StanceClassifier> = match kind.as_str() {
            "linear" => match LinearModel::load(path) {
                Ok(m) => Box::new(m),
                Err(PersistError::ScalarWidth { .. }) => {
                    Box::new(LinearModel32::load(path).map_err(|e| ctx(&e))?)
                }
                Err(e) => return Err(ctx(&e)),
            },
            "subword" => match SubwordModel::load(path) {
                Ok(m) => Box::new(m),
                Err(PersistError::ScalarWidth { .. }) => {
                    Box::new(SubwordModel64::load(path).map_err(|e| ctx(&e))?)
                }
                Err(e) => return Err(ctx(&e)),
            },
            other => {
                return Err(CliError::Model(format!(
                    "{}: unknown model kind `{other}`",
                    path.display()
                )))
            }
        };
        return Ok(model);
    }
    LookupModel::load(path)
        .map(|m| Box::new(m) as Box<dyn StanceClassifier>)
        .map_err(|e| ctx(&e))
}
