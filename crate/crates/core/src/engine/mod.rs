//! Two-stage training and the inference modes.

mod infer;
mod train;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use infer::{evaluate_model, run_end_to_end, run_inference, run_policy_opt, Evaluation, InferenceMode};
pub use train::{train_stage1, train_stage2, StageResult, TrainOptions};

use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::lm::{AdamWConfig, LmConfig, Stage};
use crate::rmask::RMaskConfig;
use crate::sampler::SamplerConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Model hyperparameters; the vocabulary size comes from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let c = LmConfig::for_vocab(1);
        Self {
            d_model: c.d_model,
            n_layers: c.n_layers,
            n_heads: c.n_heads,
            d_ff: c.d_ff,
            dropout: c.dropout,
            max_len: c.max_len,
            init_seed: c.init_seed,
        }
    }
}

impl ModelSpec {
    pub fn lm_config(&self, vocab_size: usize) -> LmConfig {
        LmConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            dropout: self.dropout,
            max_len: self.max_len,
            init_seed: self.init_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub version: u32,
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub alpha: f64,
    /// Epochs without a new best validation score before stopping; 0
    /// disables early stopping.
    pub patience: usize,
    /// Validate every this many epochs; 0 disables validation, in which
    /// case the last epoch's model is kept.
    pub validate_every: usize,
    /// Write an epoch checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Cap on validation sessions; 0 uses the whole split.
    pub max_valid_sessions: usize,
    pub model: ModelSpec,
    pub optimizer: AdamWConfig,
    pub sampler: SamplerConfig,
    pub rmask: RMaskConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            batch_size: 8,
            learning_rate: 1.5e-4,
            stage1_epochs: 60,
            stage2_epochs: 5,
            alpha: 0.01,
            patience: 0,
            validate_every: 1,
            checkpoint_every: 0,
            max_valid_sessions: 0,
            model: ModelSpec::default(),
            optimizer: AdamWConfig::default(),
            sampler: SamplerConfig::default(),
            rmask: RMaskConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        self.model.lm_config(1).validate()?;
        self.sampler.validate()?;
        self.rmask.validate()?;
        Ok(())
    }
}

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub stage: Stage,
    pub nll: f64,
    pub kl: f64,
    pub alpha: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub mean_total: f64,
    pub valid: Option<Metrics>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHeader {
    pub stage: Stage,
    pub seed: u64,
    pub num_params: usize,
    pub vocab_size: usize,
    pub train_sessions: usize,
    pub valid_sessions: usize,
    pub config: TrainConfig,
}

/// Append-only record of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub header: TrainHeader,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub wall_secs: f64,
}

impl TrainLog {
    /// Writes `<prefix>_header.json`, `<prefix>_steps.jsonl` and
    /// `<prefix>_epochs.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let dir = dir.as_ref();
        let header = serde_json::json!({
            "header": self.header,
            "best_epoch": self.best_epoch,
            "wall_secs": self.wall_secs,
        });
        let p = dir.join(format!("{prefix}_header.json"));
        fs::write(&p, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&p, e))?;
        write_jsonl(&dir.join(format!("{prefix}_steps.jsonl")), &self.steps)?;
        write_jsonl(&dir.join(format!("{prefix}_epochs.jsonl")), &self.epochs)?;
        Ok(())
    }

    /// FNV-1a over the bit patterns of every step's nll, kl and total.
    pub fn loss_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in &self.steps {
            for v in [s.nll, s.kl, s.total] {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for it in items {
        serde_json::to_writer(&mut f, it)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
