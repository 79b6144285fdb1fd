//! Decoder-only causal language model and the training losses.

mod checkpoint;
mod loss;
mod model;
mod optim;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{
    bidirectional_kl, nll_loss, stage_loss, stage_loss_and_grad, LossBreakdown, PairExample, Stage, PROB_FLOOR,
};
pub use model::{KvCache, Transformer};
pub use optim::{AdamW, AdamWConfig};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub init_seed: u64,
}

impl LmConfig {
    /// A config sized for `vocab_size` with the library defaults for the rest.
    pub fn for_vocab(vocab_size: usize) -> Self {
        LmConfig {
            vocab_size,
            d_model: 128,
            n_layers: 2,
            n_heads: 4,
            d_ff: 512,
            dropout: 0.1,
            max_len: 512,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Next-token distributions: row `t` is P(x_{t+1} | x_0..=x_t).
#[derive(Debug, Clone, PartialEq)]
pub struct LMDistribution {
    probs: Array2<f64>,
}

impl LMDistribution {
    /// Wraps a probability matrix, checking each row is a distribution.
    pub fn from_probs(probs: Array2<f64>) -> Result<Self> {
        for (t, row) in probs.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::Shape(format!("row {t} has a negative or NaN entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Shape(format!("row {t} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    /// Row-wise softmax of logits.
    pub fn from_logits(logits: &Array2<f64>) -> Self {
        let mut probs = logits.clone();
        for mut row in probs.axis_iter_mut(Axis(0)) {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Self { probs }
    }

    pub fn positions(&self) -> usize {
        self.probs.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.probs.row(t)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Anything that can continue a token context greedily.
pub trait SpanGenerator {
    fn max_len(&self) -> usize;

    /// Greedy continuation of `context` until `stop` (included) or
    /// `max_new` tokens.
    fn generate(&self, context: &[TokenId], stop: TokenId, max_new: usize) -> Result<Vec<TokenId>>;

    /// Like [`generate`](Self::generate), reusing `cache` when the
    /// context extends the previously processed prefix.
    fn generate_cached(
        &self,
        cache: &mut KvCache,
        context: &[TokenId],
        stop: TokenId,
        max_new: usize,
    ) -> Result<Vec<TokenId>> {
        let _ = cache;
        self.generate(context, stop, max_new)
    }
}
