//! BERT encoder with a pooled two-way classification head, parameters kept under the
//! Hugging Face `BertForSequenceClassification` names.

use std::collections::{BTreeMap, HashMap};

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::BertConfig;
use crate::EncoderError;

/// Head outputs, in logit order.
pub const LABELS: [&str; 2] = ["AGAINST", "FAVOR"];

const MASKED_SCORE: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

fn param_specs(c: &BertConfig) -> Vec<(String, Vec<usize>, Init)> {
    let h = c.hidden_size;
    let mut v = Vec::new();
    let lin = |v: &mut Vec<_>, name: String, out: usize, inp: usize| {
        v.push((format!("{name}.weight"), vec![out, inp], Init::Normal));
        v.push((format!("{name}.bias"), vec![out], Init::Zeros));
    };
    let ln = |v: &mut Vec<(String, Vec<usize>, Init)>, name: String| {
        v.push((format!("{name}.weight"), vec![h], Init::Ones));
        v.push((format!("{name}.bias"), vec![h], Init::Zeros));
    };
    let e = "bert.embeddings";
    v.push((
        format!("{e}.word_embeddings.weight"),
        vec![c.vocab_size, h],
        Init::Normal,
    ));
    v.push((
        format!("{e}.position_embeddings.weight"),
        vec![c.max_position_embeddings, h],
        Init::Normal,
    ));
    v.push((
        format!("{e}.token_type_embeddings.weight"),
        vec![c.type_vocab_size, h],
        Init::Normal,
    ));
    ln(&mut v, format!("{e}.LayerNorm"));
    for i in 0..c.num_hidden_layers {
        let l = format!("bert.encoder.layer.{i}");
        for p in ["query", "key", "value"] {
            lin(&mut v, format!("{l}.attention.self.{p}"), h, h);
        }
        lin(&mut v, format!("{l}.attention.output.dense"), h, h);
        ln(&mut v, format!("{l}.attention.output.LayerNorm"));
        lin(
            &mut v,
            format!("{l}.intermediate.dense"),
            c.intermediate_size,
            h,
        );
        lin(&mut v, format!("{l}.output.dense"), h, c.intermediate_size);
        ln(&mut v, format!("{l}.output.LayerNorm"));
    }
    lin(&mut v, "bert.pooler.dense".into(), h, h);
    lin(&mut v, "classifier".into(), LABELS.len(), h);
    v
}

/// Maps checkpoint names onto ours: adds the `bert.` prefix of bare encoders and renames
/// the TF-era `gamma`/`beta` layer norm parameters.
pub fn canonical_name(name: &str) -> String {
    let mut n = name.to_string();
    if let Some(rest) = n.strip_suffix(".gamma") {
        n = format!("{rest}.weight");
    } else if let Some(rest) = n.strip_suffix(".beta") {
        n = format!("{rest}.bias");
    }
    if !n.starts_with("bert.") && !n.starts_with("classifier.") && !n.starts_with("cls.") {
        n = format!("bert.{n}");
    }
    n
}

/// Whether AdamW weight decay applies: never to biases or layer norm parameters.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.contains("LayerNorm"))
}

#[derive(Debug)]
pub struct Bert {
    config: BertConfig,
    params: BTreeMap<String, Var>,
}

/// Source of dropout masks during training.
pub struct Dropout<'a> {
    pub rng: &'a mut ChaCha8Rng,
}

fn init_tensor(
    shape: &[usize],
    init: Init,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, EncoderError> {
    let n: usize = shape.iter().product();
    let t = match init {
        Init::Zeros => Tensor::zeros(shape, DType::F32, &Device::Cpu)?,
        Init::Ones => Tensor::ones(shape, DType::F32, &Device::Cpu)?,
        Init::Normal => {
            let dist =
                Normal::new(0.0f32, std as f32).map_err(|e| EncoderError::Config(e.to_string()))?;
            let data: Vec<f32> = (0..n).map(|_| dist.sample(rng)).collect();
            Tensor::from_vec(data, shape, &Device::Cpu)?
        }
    };
    Ok(t)
}

impl Bert {
    /// Randomly initialized model: normal(0, initializer_range) weights, zero biases,
    /// unit layer norms.
    pub fn random(config: &BertConfig, seed: u64) -> Result<Self, EncoderError> {
        Self::from_tensors(config, HashMap::new(), seed)
    }

    /// Builds the model from checkpoint tensors. A missing pooler or classifier is
    /// initialized from `seed`; any other missing weight is an error.
    pub fn from_tensors(
        config: &BertConfig,
        tensors: HashMap<String, Tensor>,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut tensors: HashMap<String, Tensor> = tensors
            .into_iter()
            .map(|(k, v)| (canonical_name(&k), v))
            .collect();
        let from_scratch = tensors.is_empty();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, shape, init) in param_specs(config) {
            // always draw, so a parameter's init does not depend on which others were loaded
            let fresh = init_tensor(&shape, init, config.initializer_range, &mut rng)?;
            let t = match tensors.remove(&name) {
                Some(t) => {
                    if t.dims() != shape.as_slice() {
                        return Err(EncoderError::ShapeMismatch {
                            name,
                            expected: shape,
                            found: t.dims().to_vec(),
                        });
                    }
                    t.to_dtype(DType::F32)?.to_device(&Device::Cpu)?
                }
                None if from_scratch
                    || name.starts_with("classifier.")
                    || name.starts_with("bert.pooler.") =>
                {
                    if !from_scratch {
                        log::info!("initializing {name} from scratch");
                    }
                    fresh
                }
                None => return Err(EncoderError::MissingWeight(name)),
            };
            params.insert(name, Var::from_tensor(&t)?);
        }
        Ok(Bert {
            config: config.clone(),
            params,
        })
    }

    pub fn config(&self) -> &BertConfig {
        &self.config
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.values().map(|v| v.elem_count()).sum()
    }

    /// Detached copies of all parameters.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>, EncoderError> {
        self.params
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?.detach())))
            .collect()
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<(), EncoderError> {
        for (k, v) in &self.params {
            let t = snapshot
                .get(k)
                .ok_or_else(|| EncoderError::MissingWeight(k.clone()))?;
            v.set(t)?;
        }
        Ok(())
    }

    fn p(&self, name: &str, train: bool) -> Tensor {
        let v = &self.params[name];
        if train {
            v.as_tensor().clone()
        } else {
            v.as_detached_tensor()
        }
    }

    fn linear(&self, x: &Tensor, prefix: &str, train: bool) -> Result<Tensor, EncoderError> {
        let w = self.p(&format!("{prefix}.weight"), train);
        let b = self.p(&format!("{prefix}.bias"), train);
        let dims = x.dims().to_vec();
        let k = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / k;
        let y = x
            .contiguous()?
            .reshape((rows, k))?
            .matmul(&w.t()?)?
            .broadcast_add(&b)?;
        let mut out = dims;
        *out.last_mut().expect("rank >= 1") = w.dim(0)?;
        Ok(y.reshape(out)?)
    }

    fn layer_norm(&self, x: &Tensor, prefix: &str, train: bool) -> Result<Tensor, EncoderError> {
        let w = self.p(&format!("{prefix}.weight"), train);
        let b = self.p(&format!("{prefix}.bias"), train);
        Ok(candle_nn::ops::layer_norm_slow(
            x,
            &w,
            &b,
            self.config.layer_norm_eps as f32,
        )?)
    }

    fn activation(&self, x: &Tensor) -> Result<Tensor, EncoderError> {
        Ok(match self.config.hidden_act.as_str() {
            "gelu" => x.gelu_erf()?,
            "gelu_new" => x.gelu()?,
            _ => x.relu()?,
        })
    }

    /// Logits `[batch, 2]` for token ids `[batch, len]`. `attention_mask` holds 1 for real
    /// tokens and 0 for padding. `track_grad` records the graph for backpropagation;
    /// passing `dropout` enables dropout.
    pub fn forward(
        &self,
        input_ids: &Tensor,
        token_type_ids: &Tensor,
        attention_mask: &Tensor,
        track_grad: bool,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<Tensor, EncoderError> {
        let train = track_grad;
        let c = &self.config;
        let (b, len) = input_ids.dims2()?;
        let h = c.hidden_size;
        let heads = c.num_attention_heads;
        let hd = h / heads;
        let mut drop = |x: Tensor, p: f64| -> Result<Tensor, EncoderError> {
            match dropout.as_mut() {
                Some(d) if p > 0.0 => dropout_mask(x, p, d.rng),
                _ => Ok(x),
            }
        };

        let e = "bert.embeddings";
        let words = self
            .p(&format!("{e}.word_embeddings.weight"), train)
            .index_select(&input_ids.flatten_all()?, 0)?
            .reshape((b, len, h))?;
        let types = self
            .p(&format!("{e}.token_type_embeddings.weight"), train)
            .index_select(&token_type_ids.flatten_all()?, 0)?
            .reshape((b, len, h))?;
        let pos = self
            .p(&format!("{e}.position_embeddings.weight"), train)
            .narrow(0, 0, len)?
            .unsqueeze(0)?;
        let x = (words + types)?.broadcast_add(&pos)?;
        let x = self.layer_norm(&x, &format!("{e}.LayerNorm"), train)?;
        let mut x = drop(x, c.hidden_dropout_prob)?;

        // 0 for real tokens, MASKED_SCORE for padding
        let additive = attention_mask
            .to_dtype(DType::F32)?
            .affine(-MASKED_SCORE, MASKED_SCORE)?
            .reshape((b, 1, 1, len))?;
        let scale = 1.0 / (hd as f64).sqrt();

        for i in 0..c.num_hidden_layers {
            let l = format!("bert.encoder.layer.{i}");
            let split = |t: Tensor| -> Result<Tensor, EncoderError> {
                Ok(t.reshape((b, len, heads, hd))?
                    .transpose(1, 2)?
                    .contiguous()?)
            };
            let q = split(self.linear(&x, &format!("{l}.attention.self.query"), train)?)?;
            let k = split(self.linear(&x, &format!("{l}.attention.self.key"), train)?)?;
            let v = split(self.linear(&x, &format!("{l}.attention.self.value"), train)?)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&additive)?;
            let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
            let probs = drop(probs, c.attention_probs_dropout_prob)?;
            let ctx = probs
                .matmul(&v)?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((b, len, h))?;
            let attn = self.linear(&ctx, &format!("{l}.attention.output.dense"), train)?;
            let attn = drop(attn, c.hidden_dropout_prob)?;
            let x1 = self.layer_norm(
                &(attn + &x)?,
                &format!("{l}.attention.output.LayerNorm"),
                train,
            )?;
            let inter =
                self.activation(&self.linear(&x1, &format!("{l}.intermediate.dense"), train)?)?;
            let out = self.linear(&inter, &format!("{l}.output.dense"), train)?;
            let out = drop(out, c.hidden_dropout_prob)?;
            x = self.layer_norm(&(out + x1)?, &format!("{l}.output.LayerNorm"), train)?;
        }

        let first = x.narrow(1, 0, 1)?.squeeze(1)?;
        let pooled = self.linear(&first, "bert.pooler.dense", train)?.tanh()?;
        let pooled = drop(pooled, c.hidden_dropout_prob)?;
        self.linear(&pooled, "classifier", train)
    }
}

/// Inverted dropout with a mask drawn from `rng`.
fn dropout_mask(x: Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor, EncoderError> {
    let keep = 1.0 / (1.0 - p) as f32;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = Tensor::from_vec(mask, x.dims(), x.device())?;
    Ok((x * mask)?)
}
