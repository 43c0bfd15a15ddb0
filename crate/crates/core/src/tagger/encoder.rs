//! BERT-family transformer encoder (BERT, RoBERTa, ELECTRA discriminator)
//! built from differentiable candle primitives.
//!
//! Parameters are plain [`Var`]s keyed by their Hugging Face names without
//! the model prefix (`embeddings.word_embeddings.weight`,
//! `encoder.layer.0.attention.self.query.weight`, ...), so released
//! checkpoints load directly.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Bert,
    Roberta,
    Electra,
}

impl ModelType {
    /// Weight-name prefix used by released checkpoints.
    pub fn prefix(self) -> &'static str {
        match self {
            ModelType::Bert => "bert",
            ModelType::Roberta => "roberta",
            ModelType::Electra => "electra",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    GeluNew,
    Relu,
}

fn default_eps() -> f64 {
    1e-12
}
fn default_init() -> f64 {
    0.02
}
fn default_act() -> Activation {
    Activation::Gelu
}

/// Architecture hyperparameters; reads the fields of a Hugging Face
/// `config.json` that matter here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub model_type: ModelType,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    #[serde(default = "default_act")]
    pub hidden_act: Activation,
    #[serde(default)]
    pub hidden_dropout_prob: f64,
    #[serde(default)]
    pub attention_probs_dropout_prob: f64,
    pub max_position_embeddings: usize,
    #[serde(default)]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default)]
    pub pad_token_id: u32,
    /// ELECTRA only: embedding width when it differs from `hidden_size`.
    #[serde(default)]
    pub embedding_size: Option<usize>,
    #[serde(default = "default_init")]
    pub initializer_range: f64,
}

impl EncoderConfig {
    /// A small randomly initialised BERT for CPU-scale experiments.
    pub fn small(vocab_size: usize, hidden: usize, layers: usize, heads: usize, max_len: usize) -> Self {
        EncoderConfig {
            model_type: ModelType::Bert,
            vocab_size,
            hidden_size: hidden,
            num_hidden_layers: layers,
            num_attention_heads: heads,
            intermediate_size: hidden * 4,
            hidden_act: Activation::Gelu,
            hidden_dropout_prob: 0.0,
            attention_probs_dropout_prob: 0.0,
            max_position_embeddings: max_len,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            pad_token_id: 0,
            embedding_size: None,
            initializer_range: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_attention_heads == 0 {
            return Err(Error::Config("hidden size and head count must be positive".into()));
        }
        if self.hidden_size % self.num_attention_heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if self.max_input_len() < 3 {
            return Err(Error::Config("max_position_embeddings too small".into()));
        }
        Ok(())
    }

    fn embedding_width(&self) -> usize {
        self.embedding_size.unwrap_or(self.hidden_size)
    }

    /// Longest piece sequence (specials included) the encoder accepts.
    pub fn max_input_len(&self) -> usize {
        match self.model_type {
            // positions start after the padding index
            ModelType::Roberta => self.max_position_embeddings.saturating_sub(self.pad_token_id as usize + 1),
            _ => self.max_position_embeddings,
        }
    }
}

/// Owner of every trainable tensor, in name order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

/// Draws N(0, std) values with Box-Muller from a ChaCha stream.
pub(crate) fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push((std * r * theta.cos()) as f32);
        if out.len() < n {
            out.push((std * r * theta.sin()) as f32);
        }
    }
    out
}

pub(crate) enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

impl ParamStore {
    pub(crate) fn add(
        &mut self,
        name: String,
        shape: &[usize],
        init: Init,
        rng: &mut ChaCha8Rng,
        device: &Device,
    ) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Normal(std) => normal_vec(rng, n, std),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, device)?)?;
        let t = var.as_tensor().clone();
        if self.vars.insert(name.clone(), var).is_some() {
            return Err(Error::Config(format!("parameter {name} registered twice")));
        }
        Ok(t)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Deep copy of every parameter.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    /// Overwrites parameters from `values`; every parameter must be present
    /// with a matching shape.
    pub fn restore(&self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, var) in &self.vars {
            let t = values
                .get(name)
                .ok_or_else(|| Error::Config(format!("snapshot lacks parameter {name}")))?;
            set_checked(name, var, t)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let map: std::collections::HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }
}

pub(crate) fn set_checked(name: &str, var: &Var, t: &Tensor) -> Result<()> {
    if t.dims() != var.dims() {
        return Err(Error::Config(format!(
            "parameter {name}: expected shape {:?}, found {:?}",
            var.dims(),
            t.dims()
        )));
    }
    var.set(&t.to_dtype(DType::F32)?.to_device(var.device())?)?;
    Ok(())
}

/// Optional dropout state threaded through a training forward pass.
pub struct DropoutRng<'a> {
    pub rng: &'a mut ChaCha8Rng,
}

fn dropout(x: &Tensor, p: f64, rng: Option<&mut DropoutRng<'_>>) -> Result<Tensor> {
    let Some(d) = rng else {
        return Ok(x.clone());
    };
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let scale = (1.0 / (1.0 - p)) as f32;
    let threshold = (p * u32::MAX as f64) as u32;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if d.rng.next_u32() < threshold { 0.0 } else { scale })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
    Ok(x.mul(&mask)?)
}

fn cast(t: &Tensor, dt: DType) -> Result<Tensor> {
    if t.dtype() == dt {
        Ok(t.clone())
    } else {
        Ok(t.to_dtype(dt)?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    w: Tensor,
    b: Tensor,
}

impl Dense {
    pub(crate) fn new(
        ps: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
        dev: &Device,
    ) -> Result<Self> {
        Ok(Dense {
            w: ps.add(format!("{name}.weight"), &[output, input], Init::Normal(std), rng, dev)?,
            b: ps.add(format!("{name}.bias"), &[output], Init::Zeros, rng, dev)?,
        })
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dt = x.dtype();
        let w = cast(&self.w, dt)?;
        Ok(x.broadcast_matmul(&w.t()?)?.broadcast_add(&cast(&self.b, dt)?)?)
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    w: Tensor,
    b: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(ps: &mut ParamStore, name: &str, size: usize, eps: f64, rng: &mut ChaCha8Rng, dev: &Device) -> Result<Self> {
        Ok(LayerNorm {
            w: ps.add(format!("{name}.weight"), &[size], Init::Ones, rng, dev)?,
            b: ps.add(format!("{name}.bias"), &[size], Init::Zeros, rng, dev)?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dt = x.dtype();
        let x32 = cast(x, DType::F32)?;
        let h = x32.dim(D::Minus1)? as f64;
        let mean = (x32.sum_keepdim(D::Minus1)? / h)?;
        let centered = x32.broadcast_sub(&mean)?;
        let var = (centered.sqr()?.sum_keepdim(D::Minus1)? / h)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        let out = normed.broadcast_mul(&self.w)?.broadcast_add(&self.b)?;
        cast(&out, dt)
    }
}

fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let z = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&z)?)
}

fn activate(x: &Tensor, act: Activation) -> Result<Tensor> {
    Ok(match act {
        Activation::Gelu => x.gelu_erf()?,
        Activation::GeluNew => x.gelu()?,
        Activation::Relu => x.relu()?,
    })
}

#[derive(Debug, Clone)]
struct Layer {
    query: Dense,
    key: Dense,
    value: Dense,
    attn_out: Dense,
    attn_norm: LayerNorm,
    intermediate: Dense,
    output: Dense,
    out_norm: LayerNorm,
}

/// Transformer encoder returning the final-layer hidden states.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    word: Tensor,
    position: Tensor,
    token_type: Option<Tensor>,
    emb_norm: LayerNorm,
    emb_project: Option<Dense>,
    layers: Vec<Layer>,
}

impl Encoder {
    /// Registers all parameters in `ps`, initialised from `rng`.
    pub fn new(config: &EncoderConfig, ps: &mut ParamStore, rng: &mut ChaCha8Rng, dev: &Device) -> Result<Self> {
        config.validate()?;
        let std = config.initializer_range;
        let e = config.embedding_width();
        let h = config.hidden_size;
        let word = ps.add("embeddings.word_embeddings.weight".into(), &[config.vocab_size, e], Init::Normal(std), rng, dev)?;
        let position = ps.add(
            "embeddings.position_embeddings.weight".into(),
            &[config.max_position_embeddings, e],
            Init::Normal(std),
            rng,
            dev,
        )?;
        let token_type = if config.type_vocab_size > 0 {
            Some(ps.add(
                "embeddings.token_type_embeddings.weight".into(),
                &[config.type_vocab_size, e],
                Init::Normal(std),
                rng,
                dev,
            )?)
        } else {
            None
        };
        let emb_norm = LayerNorm::new(ps, "embeddings.LayerNorm", e, config.layer_norm_eps, rng, dev)?;
        let emb_project = if e != h {
            Some(Dense::new(ps, "embeddings_project", e, h, std, rng, dev)?)
        } else {
            None
        };
        let mut layers = Vec::with_capacity(config.num_hidden_layers);
        for i in 0..config.num_hidden_layers {
            let p = format!("encoder.layer.{i}");
            layers.push(Layer {
                query: Dense::new(ps, &format!("{p}.attention.self.query"), h, h, std, rng, dev)?,
                key: Dense::new(ps, &format!("{p}.attention.self.key"), h, h, std, rng, dev)?,
                value: Dense::new(ps, &format!("{p}.attention.self.value"), h, h, std, rng, dev)?,
                attn_out: Dense::new(ps, &format!("{p}.attention.output.dense"), h, h, std, rng, dev)?,
                attn_norm: LayerNorm::new(ps, &format!("{p}.attention.output.LayerNorm"), h, config.layer_norm_eps, rng, dev)?,
                intermediate: Dense::new(ps, &format!("{p}.intermediate.dense"), h, config.intermediate_size, std, rng, dev)?,
                output: Dense::new(ps, &format!("{p}.output.dense"), config.intermediate_size, h, std, rng, dev)?,
                out_norm: LayerNorm::new(ps, &format!("{p}.output.LayerNorm"), h, config.layer_norm_eps, rng, dev)?,
            });
        }
        Ok(Encoder {
            config: config.clone(),
            word,
            position,
            token_type,
            emb_norm,
            emb_project,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// `ids`: `[batch, len]` u32; `mask`: `[batch, len]` with 1 for real
    /// pieces and 0 for padding. Returns `[batch, len, hidden]` in `dtype`.
    pub fn forward(
        &self,
        ids: &Tensor,
        mask: &Tensor,
        dtype: DType,
        mut drop: Option<&mut DropoutRng<'_>>,
    ) -> Result<Tensor> {
        let (b, len) = ids.dims2()?;
        if len > self.config.max_input_len() {
            return Err(Error::domain(format!(
                "input of {len} pieces exceeds the encoder budget of {}",
                self.config.max_input_len()
            )));
        }
        let dev = ids.device();
        let e = self.config.embedding_width();
        let flat = ids.flatten_all()?;
        let mut x = self.word.index_select(&flat, 0)?.reshape((b, len, e))?;
        let offset = match self.config.model_type {
            ModelType::Roberta => self.config.pad_token_id + 1,
            _ => 0,
        };
        let pos_ids = Tensor::arange(offset, offset + len as u32, dev)?;
        x = x.broadcast_add(&self.position.index_select(&pos_ids, 0)?)?;
        if let Some(tt) = &self.token_type {
            x = x.broadcast_add(&tt.get(0)?)?;
        }
        let mut x = self.emb_norm.forward(&cast(&x, dtype)?)?;
        x = dropout(&x, self.config.hidden_dropout_prob, drop.as_deref_mut())?;
        if let Some(p) = &self.emb_project {
            x = p.forward(&x)?;
        }

        let heads = self.config.num_attention_heads;
        let hd = self.config.hidden_size / heads;
        // additive mask: 0 for real pieces, -1e4 for padding
        let bias = ((mask.to_dtype(DType::F32)? - 1.0)? * 10000.0)?
            .reshape((b, 1, 1, len))?
            .to_dtype(dtype)?;
        let scale = 1.0 / (hd as f64).sqrt();
        for layer in &self.layers {
            let split = |t: Tensor| -> Result<Tensor> {
                Ok(t.reshape((b, len, heads, hd))?.transpose(1, 2)?.contiguous()?)
            };
            let q = split(layer.query.forward(&x)?)?;
            let k = split(layer.key.forward(&x)?)?;
            let v = split(layer.value.forward(&x)?)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&bias)?;
            let probs = softmax_last(&scores)?;
            let probs = dropout(&probs, self.config.attention_probs_dropout_prob, drop.as_deref_mut())?;
            let ctx = probs
                .matmul(&v)?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((b, len, self.config.hidden_size))?;
            let attn = dropout(&layer.attn_out.forward(&ctx)?, self.config.hidden_dropout_prob, drop.as_deref_mut())?;
            x = layer.attn_norm.forward(&(attn + &x)?)?;
            let inter = activate(&layer.intermediate.forward(&x)?, self.config.hidden_act)?;
            let out = dropout(&layer.output.forward(&inter)?, self.config.hidden_dropout_prob, drop.as_deref_mut())?;
            x = layer.out_norm.forward(&(out + &x)?)?;
        }
        Ok(x)
    }
}
