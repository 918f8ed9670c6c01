//! Masked-LM training on normal logs and the checkpoint file.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::masking::{plan_random, MaskPlan};
use crate::model::{self, Container, ModelConfig, Parameters, Targets};
use crate::tokenize::{TokenSequence, Vocabulary};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub mask_fraction: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: usize,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            mask_fraction: crate::masking::DEFAULT_FRACTION,
            learning_rate: 3e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            warmup_steps: 0,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::ConfigInvalid {
                field: format!("train.{field}"),
                message: message.into(),
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return bad("mask_fraction", "must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1", "betas must lie in [0, 1)");
        }
        if self.grad_clip.is_some_and(|c| c.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return bad("grad_clip", "must be positive when set");
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay. Decay is applied to rank-2 tensors only.
pub struct AdamW {
    cfg: TrainConfig,
    first: Parameters,
    second: Parameters,
    step: u64,
}

impl AdamW {
    pub fn new(params: &Parameters, cfg: TrainConfig) -> Result<Self> {
        Ok(AdamW {
            cfg,
            first: Parameters::zeros(params.config)?,
            second: Parameters::zeros(params.config)?,
            step: 0,
        })
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) {
        self.step += 1;
        let c = &self.cfg;
        let lr = if c.warmup_steps > 0 && (self.step as usize) <= c.warmup_steps {
            c.learning_rate * self.step as f64 / c.warmup_steps as f64
        } else {
            c.learning_rate
        };
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.first.tensors)
            .zip(&mut self.second.tensors)
        {
            let decay = if p.shape.len() == 2 { c.weight_decay } else { 0.0 };
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m.data[i] / bias1;
                let vhat = v.data[i] / bias2;
                let update = mhat / (vhat.sqrt() + c.epsilon) + decay * p.data[i];
                p.data[i] = (p.data[i] - lr * update) as f32 as f64;
            }
        }
    }
}

/// Trained weights plus everything needed to check compatibility later.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Parameters,
    pub vocab_hash: String,
    pub train_config: TrainConfig,
    pub final_loss: f64,
    /// Mean masked-token loss per epoch.
    pub history: Vec<f64>,
}

fn masked_batch(seqs: &[&TokenSequence], plans: &[MaskPlan]) -> (Vec<TokenSequence>, Vec<Targets>) {
    debug_assert_eq!(seqs.len(), plans.len());
    let inputs = plans.iter().map(|p| p.masked_sequence.clone()).collect();
    let targets = plans.iter().map(MaskPlan::targets).collect();
    (inputs, targets)
}

/// Trains a freshly initialized encoder. `corpus` must hold normal logs only.
pub fn train(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
) -> Result<Checkpoint> {
    train_with_progress(corpus, vocab, model_cfg, cfg, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with_progress(
    corpus: &[TokenSequence],
    vocab: &Vocabulary,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if model_cfg.vocab_size != vocab.len() {
        return Err(Error::ConfigInvalid {
            field: "model.vocab_size".into(),
            message: format!("{} but vocabulary has {}", model_cfg.vocab_size, vocab.len()),
        });
    }
    let mut params = Parameters::init(model_cfg, cfg.seed)?;
    let mut opt = AdamW::new(&params, cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(cfg.seed, &[1, epoch as u64]));
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let seqs: Vec<&TokenSequence> = chunk.iter().map(|&i| &corpus[i]).collect();
            let plans: Vec<MaskPlan> = chunk
                .iter()
                .map(|&i| {
                    plan_random(
                        &corpus[i],
                        cfg.mask_fraction,
                        seed::derive(cfg.seed, &[2, epoch as u64, i as u64]),
                    )
                })
                .collect();
            let (inputs, targets) = masked_batch(&seqs, &plans);
            let dropout = seed::derive(cfg.seed, &[3, epoch as u64, b as u64]);
            let (loss, mut grads) = model::backward(&params, &inputs, &targets, Some(dropout))
                .map_err(|e| match e {
                    Error::NonFiniteActivation(_) | Error::NonFiniteGradient(_) => {
                        Error::DivergenceDetected { epoch, loss: f64::NAN }
                    }
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss });
            }
            if let Some(clip) = cfg.grad_clip {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            opt.step(&mut params, &grads);
            let n: usize = targets.iter().map(Vec::len).sum();
            total += loss * n as f64;
            count += n;
        }
        let mean = total / count as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    if !params.is_finite() {
        return Err(Error::DivergenceDetected {
            epoch: cfg.epochs - 1,
            loss: f64::NAN,
        });
    }
    Ok(Checkpoint {
        params,
        vocab_hash: vocab.digest(),
        train_config: cfg,
        final_loss: *history.last().expect("epochs >= 1"),
        history,
    })
}

/// Mean masked-token loss over `corpus` under seeded masking, without dropout.
pub fn evaluate_params_loss(
    params: &Parameters,
    corpus: &[TokenSequence],
    fraction: f64,
    seed: u64,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (mut total, mut count) = (0.0, 0usize);
    for (c, chunk) in corpus.chunks(64).enumerate() {
        let plans: Vec<MaskPlan> = chunk
            .iter()
            .enumerate()
            .map(|(j, s)| plan_random(s, fraction, seed::derive(seed, &[(c * 64 + j) as u64])))
            .collect();
        let refs: Vec<&TokenSequence> = chunk.iter().collect();
        let (inputs, targets) = masked_batch(&refs, &plans);
        let out = model::forward(params, &inputs, false, 0)?;
        let n: usize = targets.iter().map(Vec::len).sum();
        total += model::mlm_loss(&out, &targets)? * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

impl Checkpoint {
    /// Wraps untrained parameters, for comparisons against a trained model.
    pub fn untrained(params: Parameters, vocab: &Vocabulary, train_config: TrainConfig) -> Self {
        Checkpoint {
            params,
            vocab_hash: vocab.digest(),
            train_config: TrainConfig {
                epochs: 0,
                ..train_config
            },
            final_loss: f64::NAN,
            history: Vec::new(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.digest();
        if found != self.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn evaluate_loss(&self, vocab: &Vocabulary, corpus: &[TokenSequence], seed: u64) -> Result<f64> {
        self.check_vocab(vocab)?;
        evaluate_params_loss(&self.params, corpus, self.train_config.mask_fraction, seed)
    }

    fn header(&self) -> Vec<(String, String)> {
        let m = &self.params.config;
        let t = &self.train_config;
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("model.d_model", m.d_model.to_string()),
            kv("model.n_heads", m.n_heads.to_string()),
            kv("model.n_layers", m.n_layers.to_string()),
            kv("model.d_ff", m.d_ff.to_string()),
            kv("model.max_len", m.max_len.to_string()),
            kv("model.vocab_size", m.vocab_size.to_string()),
            kv("model.dropout_rate", m.dropout_rate.to_string()),
            kv("vocab_hash", self.vocab_hash.clone()),
            kv("train.epochs", t.epochs.to_string()),
            kv("train.batch_size", t.batch_size.to_string()),
            kv("train.mask_fraction", t.mask_fraction.to_string()),
            kv("train.learning_rate", t.learning_rate.to_string()),
            kv("train.weight_decay", t.weight_decay.to_string()),
            kv("train.beta1", t.beta1.to_string()),
            kv("train.beta2", t.beta2.to_string()),
            kv("train.epsilon", t.epsilon.to_string()),
            kv("train.warmup_steps", t.warmup_steps.to_string()),
            kv(
                "train.grad_clip",
                t.grad_clip.map_or("none".to_string(), |c| c.to_string()),
            ),
            kv("train.seed", t.seed.to_string()),
            kv("final_loss", self.final_loss.to_string()),
            kv(
                "history",
                self.history.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ),
        ]
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        model::write_container(
            w,
            &Container {
                header: self.header(),
                tensors: self.params.tensors.clone(),
            },
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        crate::digest(&self.to_bytes())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut c = model::read_container(r)?;
        let tensors = std::mem::take(&mut c.tensors);
        let get = |k: &str| {
            c.value(k)
                .ok_or_else(|| Error::format("checkpoint", format!("missing header `{k}`")))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format("checkpoint", format!("bad value for `{key}`: `{v}`")))
        }
        let field = |k: &str| get(k).and_then(|v| num::<usize>(k, v));
        let float = |k: &str| get(k).and_then(|v| num::<f64>(k, v));
        let config = ModelConfig {
            d_model: field("model.d_model")?,
            n_heads: field("model.n_heads")?,
            n_layers: field("model.n_layers")?,
            d_ff: field("model.d_ff")?,
            max_len: field("model.max_len")?,
            vocab_size: field("model.vocab_size")?,
            dropout_rate: float("model.dropout_rate")?,
        };
        let grad_clip = match get("train.grad_clip")? {
            "none" => None,
            v => Some(num("train.grad_clip", v)?),
        };
        let train_config = TrainConfig {
            epochs: field("train.epochs")?,
            batch_size: field("train.batch_size")?,
            mask_fraction: float("train.mask_fraction")?,
            learning_rate: float("train.learning_rate")?,
            weight_decay: float("train.weight_decay")?,
            beta1: float("train.beta1")?,
            beta2: float("train.beta2")?,
            epsilon: float("train.epsilon")?,
            warmup_steps: field("train.warmup_steps")?,
            grad_clip,
            seed: get("train.seed").and_then(|v| num("train.seed", v))?,
        };
        let history = match get("history")? {
            "" => Vec::new(),
            h => h.split(',').map(|v| num("history", v)).collect::<Result<_>>()?,
        };
        let mut params = Parameters::zeros(config)?;
        if params.tensors.len() != tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} tensors, config expects {}",
                tensors.len(),
                params.tensors.len()
            )));
        }
        for (slot, t) in params.tensors.iter_mut().zip(tensors) {
            if slot.name != t.name || slot.shape != t.shape {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} {:?}, found {} {:?}",
                    slot.name, slot.shape, t.name, t.shape
                )));
            }
            slot.data = t.data;
        }
        Ok(Checkpoint {
            params,
            vocab_hash: get("vocab_hash")?.to_string(),
            train_config,
            final_loss: float("final_loss")?,
            history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::{CleanLog, RawRef};
    use crate::tokenize::encode_all;

    fn corpus(texts: &[&str]) -> (Vocabulary, Vec<TokenSequence>) {
        let logs: Vec<CleanLog> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                CleanLog::new(
                    *t,
                    RawRef {
                        source_id: "t".into(),
                        line_no: i,
                    },
                )
            })
            .collect();
        let vocab = Vocabulary::build(&logs, 1, 1000).unwrap();
        let seqs = encode_all(&vocab, &logs, 16).unwrap();
        (vocab, seqs)
    }

    fn tiny(vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            d_ff: 32,
            max_len: 16,
            vocab_size: vocab.len(),
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn memorizes_a_single_log() {
        let texts = vec!["alpha beta gamma delta epsilon"; 32];
        let (vocab, seqs) = corpus(&texts);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 3e-3,
            seed: 5,
            ..Default::default()
        };
        let ckpt = train(&seqs, &vocab, tiny(&vocab), cfg).unwrap();
        assert_eq!(ckpt.history.len(), 50);
        let targets: Vec<Targets> = (0..5).map(|i| vec![(i, seqs[0].ids[i])]).collect();
        let inputs: Vec<TokenSequence> = (0..5)
            .map(|i| crate::masking::plan_token_by_token(&seqs[0])[i].masked_sequence.clone())
            .collect();
        let probs = model::masked_probabilities(&ckpt.params, &inputs, &targets).unwrap();
        let mean = probs.iter().flatten().sum::<f64>() / 5.0;
        assert!(mean > 0.9, "mean probability {mean}");
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let texts = ["a b c d", "a b e d", "f g h", "f g i", "a b c d e"];
        let (vocab, seqs) = corpus(&texts);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            seed: 11,
            ..Default::default()
        };
        let mut mc = tiny(&vocab);
        mc.dropout_rate = 0.1;
        let a = train(&seqs, &vocab, mc, cfg).unwrap();
        let b = train(&seqs, &vocab, mc, cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = Checkpoint::read_from(&a.to_bytes()[..]).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_bytes(), a.to_bytes());
        assert_eq!(
            back.evaluate_loss(&vocab, &seqs, 4).unwrap().to_bits(),
            a.evaluate_loss(&vocab, &seqs, 4).unwrap().to_bits()
        );
    }

    #[test]
    fn loss_drops_over_fifty_steps() {
        let texts: Vec<String> = (0..32)
            .map(|i| format!("node w{} reports state s{} to server", i % 4, i % 3))
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let (vocab, seqs) = corpus(&refs);
        let mc = tiny(&vocab);
        let init = Parameters::init(mc, 2).unwrap();
        let before = evaluate_params_loss(&init, &seqs, 0.15, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 2,
            ..Default::default()
        };
        let ckpt = train(&seqs, &vocab, mc, cfg).unwrap();
        let after = ckpt.evaluate_loss(&vocab, &seqs, 9).unwrap();
        assert!(after <= 0.8 * before, "{before} -> {after}");
        assert!(ckpt.history.iter().all(|h| h.is_finite()));
        assert!(ckpt.history[49] < ckpt.history[0]);
        let ln_v = (vocab.len() as f64).ln();
        assert!((before - ln_v).abs() <= 0.1 * ln_v, "{before} vs ln V {ln_v}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let (vocab, seqs) = corpus(&["a b"]);
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[], &vocab, tiny(&vocab), cfg), Err(Error::EmptyCorpus)));
        let bad = TrainConfig { epochs: 0, ..cfg };
        assert!(matches!(train(&seqs, &vocab, tiny(&vocab), bad), Err(Error::ConfigInvalid { .. })));
        let ckpt = Checkpoint::untrained(Parameters::init(tiny(&vocab), 0).unwrap(), &vocab, cfg);
        let (other, _) = corpus(&["x y z"]);
        assert!(matches!(ckpt.evaluate_loss(&other, &seqs, 0), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn diverges_loudly() {
        let (vocab, seqs) = corpus(&["a b c", "a b d"]);
        let mut params = Parameters::init(tiny(&vocab), 0).unwrap();
        params.tensors[0].data[4 * 16] = f64::NAN;
        let targets = vec![vec![(0, seqs[0].ids[0])]];
        assert!(model::backward(&params, &seqs[..1], &targets, None).is_err());
    }
}
