use candle_core::{Device, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stance_core::corpus::StanceExample;
use stance_core::evaluation::macro_f1;
use stance_core::StanceLabel;

use crate::bert::{decays, Bert, Dropout};
use crate::config::EncoderConfig;
use crate::model::{batch_tensors, EncoderStanceModel};
use crate::tokenizer::Encoding;
use crate::weights::{load_checkpoint, Checkpoint, WeightSource};
use crate::EncoderError;

/// One line of `training_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderEpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub validation_macro_f1: Option<f64>,
    /// whether the returned weights are this epoch's
    pub selected: bool,
}

fn label_index(l: StanceLabel) -> u32 {
    match l {
        StanceLabel::Against => 0,
        StanceLabel::Favor => 1,
    }
}

/// Multiplier on the peak learning rate before optimizer step `step` (0-based): linear
/// warmup from 0, then linear decay to 0 at `total`.
pub fn lr_factor(step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        step as f64 / warmup.max(1) as f64
    } else {
        (total.saturating_sub(step)) as f64 / (total - warmup).max(1) as f64
    }
}

fn out_of_memory(e: EncoderError, batch_size: usize) -> EncoderError {
    let msg = e.to_string().to_ascii_lowercase();
    if msg.contains("out of memory") || msg.contains("memory allocation") {
        EncoderError::OutOfMemory { batch_size }
    } else {
        e
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
fn clip_grad_norm(
    grads: &mut candle_core::backprop::GradStore,
    vars: &[Var],
    max_norm: f64,
) -> Result<f64, EncoderError> {
    let mut sq = 0f64;
    for v in vars {
        if let Some(g) = grads.get(v) {
            sq += g.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
        }
    }
    let norm = sq.sqrt();
    if max_norm > 0.0 {
        let coef = max_norm / (norm + 1e-6);
        if coef < 1.0 {
            for v in vars {
                if let Some(g) = grads.remove(v) {
                    grads.insert(v, (g * coef)?);
                }
            }
        }
    }
    Ok(norm)
}

fn validate_training_set(train: &[StanceExample]) -> Result<(), EncoderError> {
    if train.is_empty() {
        return Err(EncoderError::EmptyTrainingSet);
    }
    for l in StanceLabel::ALL {
        if !train.iter().any(|e| e.label == l) {
            return Err(EncoderError::Config(format!(
                "training set has no {l} example; both labels are required"
            )));
        }
    }
    Ok(())
}

/// Fine-tunes the checkpoint named by `config.pretrained_model_id`.
pub fn fine_tune(
    train: &[StanceExample],
    validation: &[StanceExample],
    config: &EncoderConfig,
    source: &dyn WeightSource,
) -> Result<EncoderStanceModel, EncoderError> {
    validate_training_set(train)?;
    config.validate(None)?;
    let ckpt = load_checkpoint(source, &config.pretrained_model_id, config.lowercase)?;
    fine_tune_checkpoint(ckpt, train, validation, config)
}

/// Fine-tunes an already loaded checkpoint. An empty tensor map gives a randomly
/// initialized encoder.
pub fn fine_tune_checkpoint(
    ckpt: Checkpoint,
    train: &[StanceExample],
    validation: &[StanceExample],
    config: &EncoderConfig,
) -> Result<EncoderStanceModel, EncoderError> {
    validate_training_set(train)?;
    config.validate(Some(&ckpt.config))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bert = Bert::from_tensors(&ckpt.config, ckpt.tensors, config.seed)?;
    let mut model = EncoderStanceModel::new(bert, ckpt.tokenizer, config.clone())?;

    let encoded: Vec<(Encoding, u32)> = train
        .iter()
        .map(|e| (model.encode(&e.question, &e.comment), label_index(e.label)))
        .collect();
    let steps_per_epoch = encoded.len().div_ceil(config.batch_size);
    let total = steps_per_epoch * config.epochs;
    let warmup = (config.warmup_ratio * total as f64).ceil() as usize;

    let (decay, no_decay): (Vec<_>, Vec<_>) =
        model.bert.vars().iter().partition(|(name, _)| decays(name));
    let decay: Vec<Var> = decay.into_iter().map(|(_, v)| v.clone()).collect();
    let no_decay: Vec<Var> = no_decay.into_iter().map(|(_, v)| v.clone()).collect();
    let all_vars: Vec<Var> = decay.iter().chain(&no_decay).cloned().collect();
    let params = |wd: f64| ParamsAdamW {
        lr: config.learning_rate,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: wd,
    };
    let mut opt_decay = AdamW::new(decay, params(config.weight_decay))?;
    let mut opt_plain = AdamW::new(no_decay, params(0.0))?;

    let gold: Vec<StanceLabel> = validation.iter().map(|e| e.label).collect();
    let val_encoded: Vec<Encoding> = validation
        .iter()
        .map(|e| model.encode(&e.question, &e.comment))
        .collect();

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut step = 0usize;
    let mut best: Option<(f64, usize)> = None;
    let mut best_weights = None;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0f64;
        for batch in order.chunks(config.batch_size) {
            let lr = config.learning_rate * lr_factor(step, warmup, total);
            opt_decay.set_learning_rate(lr);
            opt_plain.set_learning_rate(lr);

            let encs: Vec<&Encoding> = batch.iter().map(|&i| &encoded[i].0).collect();
            let labels: Vec<u32> = batch.iter().map(|&i| encoded[i].1).collect();
            let run = |rng: &mut ChaCha8Rng| -> Result<(f64, candle_core::backprop::GradStore), EncoderError> {
                let (ids, types, mask) = batch_tensors(&encs, model.tokenizer().pad_id())?;
                let target = Tensor::from_vec(labels.clone(), labels.len(), &Device::Cpu)?;
                let logits = model.bert.forward(&ids, &types, &mask, true, Some(Dropout { rng }))?;
                let loss = candle_nn::loss::cross_entropy(&logits, &target)?;
                let value = loss.to_scalar::<f32>()? as f64;
                Ok((value, loss.backward()?))
            };
            let (loss, mut grads) = run(&mut rng).map_err(|e| out_of_memory(e, batch.len()))?;
            if !loss.is_finite() {
                return Err(EncoderError::Diverged(step));
            }
            clip_grad_norm(&mut grads, &all_vars, config.max_grad_norm)?;
            opt_decay.step(&grads)?;
            opt_plain.step(&grads)?;
            loss_sum += loss * batch.len() as f64;
            step += 1;
        }

        let f1 = if validation.is_empty() {
            None
        } else {
            let labels: Vec<StanceLabel> = model
                .predict_encoded(&val_encoded)?
                .iter()
                .map(|p| p.predicted_label)
                .collect();
            Some(macro_f1::<f64>(&labels, &gold).map_err(|e| EncoderError::Config(e.to_string()))?)
        };
        let entry = EncoderEpochLog {
            epoch,
            steps: step,
            mean_loss: loss_sum / encoded.len() as f64,
            validation_macro_f1: f1,
            selected: false,
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, validation macro-F1 {:?}",
            entry.mean_loss,
            f1
        );
        log.push(entry);
        if let Some(f1) = f1 {
            // ties keep the earlier epoch
            if best.is_none_or(|(b, _)| f1 > b) {
                best = Some((f1, epoch));
                if epoch < config.epochs {
                    best_weights = Some(model.bert.snapshot()?);
                } else {
                    best_weights = None;
                }
            }
        }
    }

    let chosen = match best {
        Some((_, epoch)) => {
            if let Some(w) = &best_weights {
                model.bert.restore(w)?;
            }
            epoch
        }
        None => config.epochs,
    };
    for entry in &mut log {
        entry.selected = entry.epoch == chosen;
    }
    model.training_log = log;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_matches_linear_warmup_then_decay() {
        // 10 steps, 2 warmup
        let f: Vec<f64> = (0..10).map(|s| lr_factor(s, 2, 10)).collect();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.5);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[6], 0.5);
        assert_eq!(f[9], 0.125);
        // no warmup
        assert_eq!(lr_factor(0, 0, 4), 1.0);
        assert_eq!(lr_factor(3, 0, 4), 0.25);
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let a = Var::new(&[1f32, 2.0], &Device::Cpu).unwrap();
        let b = Var::new(&[3f32], &Device::Cpu).unwrap();
        // loss = 3a0 + 4a1 + 12b  → gradient (3, 4, 12), norm 13
        let loss = ((a.as_tensor() * &Tensor::new(&[3f32, 4.0], &Device::Cpu).unwrap())
            .unwrap()
            .sum_all()
            .unwrap()
            + (b.as_tensor() * 12.0).unwrap().sum_all().unwrap())
        .unwrap();
        let mut grads = loss.backward().unwrap();
        let vars = [a.clone(), b.clone()];
        let norm = clip_grad_norm(&mut grads, &vars, 1.0).unwrap();
        assert!((norm - 13.0).abs() < 1e-5);
        let ga = grads.get(&a).unwrap().to_vec1::<f32>().unwrap();
        let gb = grads.get(&b).unwrap().to_vec1::<f32>().unwrap();
        let after = (ga[0] * ga[0] + ga[1] * ga[1] + gb[0] * gb[0]).sqrt();
        assert!((after - 1.0).abs() < 1e-5, "{after}");
        assert!((ga[0] / ga[1] - 0.75).abs() < 1e-6);
    }
}
