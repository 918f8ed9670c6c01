//! Effective configuration: TOML file, then command-line overrides.

use std::path::Path;

use adalog::masking::MaskingStrategy;
use adalog::model::ModelConfig;
use adalog::normalize::NormalizationConfig;
use adalog::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Top-level seed; every command fans its randomness out from it.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub normalize: NormalizationConfig,
    pub vocab: VocabSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub score: ScoreSection,
    pub calibrate: CalibrateSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSection {
    pub min_freq: usize,
    pub max_size: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            min_freq: 1,
            max_size: 8192,
        }
    }
}

/// Model shape; the vocabulary size comes from the vocabulary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_layers: m.n_layers,
            d_ff: m.d_ff,
            max_len: m.max_len,
            dropout_rate: m.dropout_rate,
        }
    }
}

impl ModelSection {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_len: self.max_len,
            vocab_size,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// Optimizer and schedule; the seed is the top-level one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub mask_fraction: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: usize,
    /// `0` disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            mask_fraction: t.mask_fraction,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            warmup_steps: t.warmup_steps,
            grad_clip: t.grad_clip.unwrap_or(0.0),
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            mask_fraction: self.mask_fraction,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            warmup_steps: self.warmup_steps,
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Token,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreSection {
    pub mask_strategy: StrategyKind,
    pub mask_fraction: f64,
    pub repeats: usize,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection {
            mask_strategy: StrategyKind::Random,
            mask_fraction: adalog::masking::DEFAULT_FRACTION,
            repeats: 1,
        }
    }
}

impl ScoreSection {
    pub fn strategy(&self) -> Result<MaskingStrategy, CliError> {
        Ok(match self.mask_strategy {
            StrategyKind::Token => MaskingStrategy::TokenByToken,
            StrategyKind::Random => MaskingStrategy::random(self.mask_fraction)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub percentile: f64,
    pub sweep: Vec<f64>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            percentile: adalog::calibrate::DEFAULT_PERCENTILE,
            sweep: adalog::calibrate::SWEEP_PERCENTILES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub templates: usize,
    pub normal: usize,
    pub anomalies: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            templates: 50,
            normal: 5000,
            anomalies: 200,
        }
    }
}

/// Flags that override configuration values.
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct Overrides {
    /// Top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Scoring mask strategy.
    #[arg(long, value_enum, global = true)]
    pub mask_strategy: Option<StrategyKind>,
    /// Fraction of tokens masked by the random strategy (scoring and training).
    #[arg(long, global = true)]
    pub mask_fraction: Option<f64>,
    /// Threshold percentile in (0, 100].
    #[arg(long, global = true)]
    pub percentile: Option<f64>,
    /// Random mask plans per log when scoring.
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
}

impl Config {
    pub fn parse_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde reports unknown keys as "unknown field `x`, expected ..."
            let field = msg
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_string();
            CliError::config(field, msg)
        })
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::missing(p, e))?;
                Self::parse_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
        if let Some(v) = o.mask_strategy {
            self.score.mask_strategy = v;
        }
        if let Some(v) = o.mask_fraction {
            self.score.mask_fraction = v;
            self.train.mask_fraction = v;
        }
        if let Some(v) = o.percentile {
            self.calibrate.percentile = v;
        }
        if let Some(v) = o.repeats {
            self.score.repeats = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.with_vocab(5).validate()?;
        self.train.with_seed(self.seed).validate()?;
        self.score.strategy()?;
        if self.score.repeats == 0 {
            return Err(CliError::config("score.repeats", "must be at least 1"));
        }
        let pct_ok = |p: f64| p > 0.0 && p <= 100.0;
        if !pct_ok(self.calibrate.percentile) {
            return Err(CliError::config("calibrate.percentile", "must lie in (0, 100]"));
        }
        if !self.calibrate.sweep.iter().all(|&p| pct_ok(p)) {
            return Err(CliError::config("calibrate.sweep", "percentiles must lie in (0, 100]"));
        }
        if self.vocab.min_freq == 0 {
            return Err(CliError::config("vocab.min_freq", "must be at least 1"));
        }
        if self.synth.templates < 2 {
            return Err(CliError::config("synth.templates", "must be at least 2"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
