//! Negative log-likelihood, symmetric KL and their combination.

use ndarray::{Array2, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use super::model::Transformer;
use super::LMDistribution;
use crate::dialog::TaggedSequence;
use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Lower bound applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub kl: f64,
    pub alpha: f64,
    pub total: f64,
    pub stage: Stage,
}

impl LossBreakdown {
    pub fn new(nll: f64, kl: f64, alpha: f64, stage: Stage) -> Self {
        Self {
            nll,
            kl,
            alpha,
            total: nll + alpha * kl,
            stage,
        }
    }
}

fn ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

fn selected(mask: Option<&[bool]>, n: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> = match mask {
        Some(m) => {
            if m.len() != n {
                return Err(Error::Shape(format!("mask has {} entries for {n} positions", m.len())));
            }
            (0..n).filter(|&t| m[t]).collect()
        }
        None => (0..n).collect(),
    };
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

/// Mean of −log P(target_t) over the selected positions. `None` selects
/// every position.
pub fn nll_loss(dist: &LMDistribution, targets: &[TokenId], position_mask: Option<&[bool]>) -> Result<f64> {
    if targets.len() != dist.positions() {
        return Err(Error::Shape(format!(
            "{} targets for {} positions",
            targets.len(),
            dist.positions()
        )));
    }
    let idx = selected(position_mask, targets.len())?;
    let mut sum = 0.0;
    for &t in &idx {
        let id = targets[t] as usize;
        if id >= dist.vocab_size() {
            return Err(Error::TokenOutOfRange {
                id,
                size: dist.vocab_size(),
            });
        }
        sum -= ln(dist.row(t)[id]);
    }
    Ok(sum / idx.len() as f64)
}

/// ½[KL(a‖b) + KL(b‖a)] for one position, written as ½Σ(a−b)(ln a − ln b).
fn sym_kl_row(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    0.5 * Zip::from(&a)
        .and(&b)
        .fold(0.0, |acc, &p, &q| acc + (p - q) * (ln(p) - ln(q)))
}

/// Mean over selected positions of the symmetric KL divergence.
pub fn bidirectional_kl(a: &LMDistribution, b: &LMDistribution, position_mask: Option<&[bool]>) -> Result<f64> {
    if a.probs().dim() != b.probs().dim() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            a.probs().dim(),
            b.probs().dim()
        )));
    }
    let idx = selected(position_mask, a.positions())?;
    let sum: f64 = idx.iter().map(|&t| sym_kl_row(a.row(t), b.row(t))).sum();
    Ok(sum / idx.len() as f64)
}

/// One training example: two input variants sharing the same targets.
///
/// `inputs[i][t]` is fed to predict `targets[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub inputs: [Vec<TokenId>; 2],
    pub targets: Vec<TokenId>,
}

impl PairExample {
    /// Shifts full sequences into (input, target) form. `original` holds
    /// the unmasked tokens.
    pub fn from_tokens(a: &[TokenId], b: &[TokenId], original: &[TokenId]) -> Result<Self> {
        if a.len() != b.len() || a.len() != original.len() {
            return Err(Error::Shape(format!(
                "pair lengths {}, {} and targets {}",
                a.len(),
                b.len(),
                original.len()
            )));
        }
        if original.len() < 2 {
            return Err(Error::Empty("training sequence shorter than 2 tokens"));
        }
        let n = original.len() - 1;
        Ok(Self {
            inputs: [a[..n].to_vec(), b[..n].to_vec()],
            targets: original[1..].to_vec(),
        })
    }

    pub fn from_sequences(a: &TaggedSequence, b: &TaggedSequence, original: &[TokenId]) -> Result<Self> {
        Self::from_tokens(a.tokens(), b.tokens(), original)
    }

    /// Both variants equal to `seq`.
    pub fn plain(seq: &[TokenId]) -> Result<Self> {
        Self::from_tokens(seq, seq, seq)
    }

    pub fn positions(&self) -> usize {
        self.targets.len()
    }
}

/// Loss over a batch without gradients. See [`stage_loss_and_grad`].
pub fn stage_loss(
    model: &Transformer,
    batch: &[PairExample],
    alpha: f64,
    stage: Stage,
    seeds: &[[u64; 2]],
) -> Result<LossBreakdown> {
    run(model, batch, alpha, stage, seeds, None)
}

/// Loss over a batch, accumulating d(total)/d(params) into `grad`.
///
/// Each example is forwarded twice with its two dropout seeds; NLL is the
/// mean of both passes and KL the symmetric divergence between them,
/// both averaged over all positions of the batch. With `alpha == 0` only
/// the first pass runs and KL is recorded as 0.
pub fn stage_loss_and_grad(
    model: &Transformer,
    batch: &[PairExample],
    alpha: f64,
    stage: Stage,
    seeds: &[[u64; 2]],
    grad: &mut [f64],
) -> Result<LossBreakdown> {
    if grad.len() != model.num_params() {
        return Err(Error::Shape(format!(
            "gradient buffer of {} for {} parameters",
            grad.len(),
            model.num_params()
        )));
    }
    run(model, batch, alpha, stage, seeds, Some(grad))
}

fn run(
    model: &Transformer,
    batch: &[PairExample],
    alpha: f64,
    stage: Stage,
    seeds: &[[u64; 2]],
    mut grad: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if seeds.len() != batch.len() {
        return Err(Error::Shape(format!("{} seed pairs for {} examples", seeds.len(), batch.len())));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("alpha {alpha} must be non-negative")));
    }
    for ex in batch {
        if ex.inputs[0].len() != ex.targets.len() || ex.inputs[1].len() != ex.targets.len() {
            return Err(Error::Shape("pair inputs and targets differ in length".into()));
        }
    }
    let n: usize = batch.iter().map(PairExample::positions).sum();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let inv_n = 1.0 / n as f64;
    let two_pass = alpha > 0.0;

    let mut nll_sum = 0.0;
    let mut kl_sum = 0.0;
    for (ex, seed) in batch.iter().zip(seeds) {
        let (z1, c1) = model.forward_train(&ex.inputs[0], Some(seed[0]))?;
        let p1 = LMDistribution::from_logits(&z1);
        if !two_pass {
            nll_sum += row_nll(&p1, &ex.targets);
            if let Some(g) = grad.as_deref_mut() {
                let mut d = p1.probs().clone();
                for (t, &y) in ex.targets.iter().enumerate() {
                    d[[t, y as usize]] -= 1.0;
                }
                d *= inv_n;
                model.backward(&c1, &d, g);
            }
            continue;
        }
        let (z2, c2) = model.forward_train(&ex.inputs[1], Some(seed[1]))?;
        let p2 = LMDistribution::from_logits(&z2);
        nll_sum += 0.5 * (row_nll(&p1, &ex.targets) + row_nll(&p2, &ex.targets));
        let rows: Vec<f64> = (0..ex.positions()).map(|t| sym_kl_row(p1.row(t), p2.row(t))).collect();
        kl_sum += rows.iter().sum::<f64>();

        if let Some(g) = grad.as_deref_mut() {
            let (d1, d2) = pair_logit_grads(&p1, &p2, &ex.targets, alpha, inv_n);
            model.backward(&c1, &d1, g);
            model.backward(&c2, &d2, g);
        }
    }
    let kl = if two_pass { kl_sum * inv_n } else { 0.0 };
    let out = LossBreakdown::new(nll_sum * inv_n, kl, alpha, stage);
    Ok(out)
}

fn row_nll(p: &LMDistribution, targets: &[TokenId]) -> f64 {
    targets
        .iter()
        .enumerate()
        .map(|(t, &y)| -ln(p.row(t)[y as usize]))
        .sum()
}

/// d(total)/d(logits) for both passes.
///
/// For S = ½[KL(p1‖p2) + KL(p2‖p1)] at one position,
/// dS/dz1 = ½[p1 ⊙ (ln p1 − ln p2 − KL(p1‖p2)) + p1 − p2], and
/// symmetrically for z2.
fn pair_logit_grads(
    p1: &LMDistribution,
    p2: &LMDistribution,
    targets: &[TokenId],
    alpha: f64,
    inv_n: f64,
) -> (Array2<f64>, Array2<f64>) {
    let (a, b) = (p1.probs(), p2.probs());
    let mut d1 = Array2::zeros(a.raw_dim());
    let mut d2 = Array2::zeros(a.raw_dim());
    for (t, &y) in targets.iter().enumerate() {
        let (ra, rb) = (a.row(t), b.row(t));
        let la = ra.mapv(ln);
        let lb = rb.mapv(ln);
        let diff = &la - &lb;
        let kl_ab = ra.dot(&diff);
        let kl_ba = -rb.dot(&diff);
        let mut g1 = d1.row_mut(t);
        let mut g2 = d2.row_mut(t);
        for v in 0..ra.len() {
            let s1 = 0.5 * (ra[v] * (diff[v] - kl_ab) + ra[v] - rb[v]);
            let s2 = 0.5 * (rb[v] * (-diff[v] - kl_ba) + rb[v] - ra[v]);
            g1[v] = 0.5 * ra[v] + alpha * s1;
            g2[v] = 0.5 * rb[v] + alpha * s2;
        }
        g1[y as usize] -= 0.5;
        g2[y as usize] -= 0.5;
    }
    d1 *= inv_n;
    d2 *= inv_n;
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_gives_ln_v() {
        let v = 7;
        let d = LMDistribution::from_probs(Array2::from_elem((3, v), 1.0 / v as f64)).unwrap();
        let l = nll_loss(&d, &[0, 3, 6], None).unwrap();
        assert!((l - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_is_near_zero() {
        let d = LMDistribution::from_probs(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(nll_loss(&d, &[1, 0], None).unwrap().abs() < 1e-12);
        // Clamped, not infinite.
        let wrong = nll_loss(&d, &[0, 1], None).unwrap();
        assert!((wrong + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_errors() {
        let d = LMDistribution::from_probs(array![[0.5, 0.5]]).unwrap();
        assert!(matches!(nll_loss(&d, &[1], Some(&[false])), Err(Error::EmptyMask)));
    }

    #[test]
    fn kl_identity_and_shape() {
        let a = LMDistribution::from_probs(array![[0.2, 0.3, 0.5]]).unwrap();
        let b = LMDistribution::from_probs(array![[0.2, 0.3, 0.5], [0.1, 0.1, 0.8]]).unwrap();
        assert_eq!(bidirectional_kl(&a, &a, None).unwrap(), 0.0);
        assert!(matches!(bidirectional_kl(&a, &b, None), Err(Error::Shape(_))));
    }

    #[test]
    fn total_is_composed_exactly() {
        let l = LossBreakdown::new(1.25, 0.375, 0.01, Stage::Stage1);
        assert_eq!(l.total, l.nll + l.alpha * l.kl);
        assert!((l.total - l.nll - l.alpha * l.kl).abs() < 1e-15);
    }
}
