//! Mini bidirectional encoder with a masked-token prediction head.
//!
//! Parameters live in `f64` for exact finite-difference checks, but are always
//! rounded to `f32`-representable values by initialization and by the optimizer,
//! so the 32-bit checkpoint container stores them losslessly.

mod container;
mod encoder;

pub use container::{read_container, write_container, Container};
pub use encoder::{backward, forward, masked_probabilities, mlm_loss, Batch, ForwardOutput, Targets};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_len: crate::tokenize::DEFAULT_MAX_LEN,
            vocab_size: 5,
            dropout_rate: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(invalid("n_heads", "must divide d_model"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid("dropout_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total scalar count, summed from the tensor shapes.
    pub fn parameter_count(&self) -> usize {
        layout(self).iter().map(|(_, shape)| shape.iter().product::<usize>()).sum()
    }
}

fn invalid(field: &str, message: &str) -> Error {
    Error::ConfigInvalid {
        field: format!("model.{field}"),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; n],
        }
    }
}

/// Per-layer tensor offsets, relative to the layer's first tensor.
pub(crate) mod slot {
    pub const ATTN_NORM_GAIN: usize = 0;
    pub const ATTN_NORM_OFFSET: usize = 1;
    pub const QUERY_W: usize = 2;
    pub const QUERY_B: usize = 3;
    pub const KEY_W: usize = 4;
    pub const KEY_B: usize = 5;
    pub const VALUE_W: usize = 6;
    pub const VALUE_B: usize = 7;
    pub const OUTPUT_W: usize = 8;
    pub const OUTPUT_B: usize = 9;
    pub const FFN_NORM_GAIN: usize = 10;
    pub const FFN_NORM_OFFSET: usize = 11;
    pub const UP_W: usize = 12;
    pub const UP_B: usize = 13;
    pub const DOWN_W: usize = 14;
    pub const DOWN_B: usize = 15;
    pub const PER_LAYER: usize = 16;

    pub const TOKEN_EMBEDDING: usize = 0;
    pub const POSITION_EMBEDDING: usize = 1;
    pub const FIRST_LAYER: usize = 2;
    // Relative to the tensor after the last layer.
    pub const FINAL_NORM_GAIN: usize = 0;
    pub const FINAL_NORM_OFFSET: usize = 1;
    pub const HEAD_W: usize = 2;
    pub const HEAD_B: usize = 3;
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut out = vec![
        ("embeddings.token".to_string(), vec![v, d]),
        ("embeddings.position".to_string(), vec![cfg.max_len, d]),
    ];
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layers.{l}.{s}");
        out.extend([
            (p("attn_norm.gain"), vec![d]),
            (p("attn_norm.offset"), vec![d]),
            (p("attn.query.weight"), vec![d, d]),
            (p("attn.query.bias"), vec![d]),
            (p("attn.key.weight"), vec![d, d]),
            (p("attn.key.bias"), vec![d]),
            (p("attn.value.weight"), vec![d, d]),
            (p("attn.value.bias"), vec![d]),
            (p("attn.output.weight"), vec![d, d]),
            (p("attn.output.bias"), vec![d]),
            (p("ffn_norm.gain"), vec![d]),
            (p("ffn_norm.offset"), vec![d]),
            (p("ffn.up.weight"), vec![d, f]),
            (p("ffn.up.bias"), vec![f]),
            (p("ffn.down.weight"), vec![f, d]),
            (p("ffn.down.bias"), vec![d]),
        ]);
    }
    out.extend([
        ("final_norm.gain".to_string(), vec![d]),
        ("final_norm.offset".to_string(), vec![d]),
        ("head.weight".to_string(), vec![d, v]),
        ("head.bias".to_string(), vec![v]),
    ]);
    out
}

/// The encoder's named tensors. Also used to hold gradients of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = layout(&config)
            .into_iter()
            .map(|(name, shape)| Tensor::zeros(name, shape))
            .collect();
        Ok(Parameters { config, tensors })
    }

    /// Seeded initialization: weight matrices and embeddings uniform in
    /// `±1/√fan_in`, biases and offsets zero, normalization gains one.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = crate::seed::rng(seed, &[0x1417]);
        for t in &mut params.tensors {
            if t.name.ends_with(".gain") {
                t.data.fill(1.0);
            } else if t.shape.len() == 2 {
                let fan_in = if t.name.starts_with("embeddings.") {
                    t.shape[1]
                } else {
                    t.shape[0]
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in &mut t.data {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        params.round_to_f32();
        Ok(params)
    }

    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub(crate) fn layer(&self, l: usize, s: usize) -> &[f64] {
        &self.tensors[slot::FIRST_LAYER + l * slot::PER_LAYER + s].data
    }

    pub(crate) fn layer_mut(&mut self, l: usize, s: usize) -> &mut [f64] {
        &mut self.tensors[slot::FIRST_LAYER + l * slot::PER_LAYER + s].data
    }

    pub(crate) fn tail(&self, s: usize) -> &[f64] {
        &self.tensors[slot::FIRST_LAYER + self.config.n_layers * slot::PER_LAYER + s].data
    }

    pub(crate) fn tail_mut(&mut self, s: usize) -> &mut [f64] {
        let n = self.config.n_layers;
        &mut self.tensors[slot::FIRST_LAYER + n * slot::PER_LAYER + s].data
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// First non-finite tensor name, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.tensors.iter_mut().flat_map(|t| t.data.iter_mut()) {
            *v *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn same_shapes(&self, other: &Parameters) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_model: 128,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_len: 128,
            vocab_size: 4096,
            dropout_rate: 0.1,
        }
    }

    #[test]
    fn parameter_count_closed_form() {
        let (d, f, v, l, n) = (128usize, 256, 4096, 128, 2);
        let per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
        let expected = v * d + l * d + n * per_layer + 2 * d + d * v + v;
        assert_eq!(expected, 1_334_272);
        assert_eq!(cfg().parameter_count(), expected);
        assert_eq!(Parameters::zeros(cfg()).unwrap().parameter_count(), expected);
    }

    #[test]
    fn init_is_deterministic_and_well_formed() {
        let mut c = cfg();
        c.vocab_size = 50;
        let a = Parameters::init(c, 9).unwrap();
        let b = Parameters::init(c, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Parameters::init(c, 10).unwrap());
        for t in &a.tensors {
            if t.name.ends_with(".gain") {
                assert!(t.data.iter().all(|&v| v == 1.0), "{}", t.name);
            }
            if t.name.ends_with(".offset") || t.name.ends_with(".bias") {
                assert!(t.data.iter().all(|&v| v == 0.0), "{}", t.name);
            }
            assert!(t.data.iter().all(|&v| v == v as f32 as f64));
        }
        let q = a.get("layers.0.attn.query.weight").unwrap();
        let bound = 1.0 / 128f64.sqrt();
        assert!(q.data.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = cfg();
        c.n_heads = 3;
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { .. })));
        let mut c = cfg();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.n_layers = 0;
        assert!(c.validate().is_err());
    }
}
