//! Masked input pairs for the consistency term.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialog::{Provenance, SpanRole, TaggedSequence};
use crate::error::{Error, Result};
use crate::vocab::{TokenId, MASK_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTarget {
    GroundTruthBelief,
    GeneratedBelief,
}

impl MaskTarget {
    fn provenance(self) -> Provenance {
        match self {
            MaskTarget::GroundTruthBelief => Provenance::GroundTruth,
            MaskTarget::GeneratedBelief => Provenance::Generated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionMode {
    Same,
    Diff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RMaskConfig {
    pub target: MaskTarget,
    pub position_mode: PositionMode,
    pub rate: f64,
    pub seed: u64,
}

impl Default for RMaskConfig {
    fn default() -> Self {
        Self {
            target: MaskTarget::GroundTruthBelief,
            position_mode: PositionMode::Diff,
            rate: 0.02,
            seed: 0,
        }
    }
}

impl RMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!("mask rate {} outside [0, 1]", self.rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub positions: BTreeSet<usize>,
}

impl MaskPlan {
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }
}

/// Body positions of belief spans whose provenance matches `target`.
pub fn eligible_positions(seq: &TaggedSequence, target: MaskTarget) -> Vec<usize> {
    let want = target.provenance();
    seq.spans()
        .iter()
        .filter(|s| s.role == SpanRole::Belief && s.provenance == want)
        .flat_map(|s| s.inner())
        .collect()
}

fn draw_plan(eligible: &[usize], rate: f64, rng: &mut impl Rng) -> MaskPlan {
    MaskPlan {
        positions: eligible.iter().copied().filter(|_| rng.gen::<f64>() < rate).collect(),
    }
}

pub fn draw_mask_pair(seq: &TaggedSequence, config: &RMaskConfig, rng: &mut impl Rng) -> (MaskPlan, MaskPlan) {
    let eligible = eligible_positions(seq, config.target);
    let a = draw_plan(&eligible, config.rate, rng);
    let b = match config.position_mode {
        PositionMode::Same => a.clone(),
        PositionMode::Diff => draw_plan(&eligible, config.rate, rng),
    };
    (a, b)
}

/// A masked sequence together with its unmasked tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence {
    pub seq: TaggedSequence,
    pub original: Vec<TokenId>,
}

pub fn apply_mask(seq: &TaggedSequence, plan: &MaskPlan) -> Result<MaskedSequence> {
    let mut out = seq.clone();
    let mut touched = BTreeSet::new();
    for &p in &plan.positions {
        let span = seq.span_at(p).ok_or(Error::PositionOutOfRange {
            position: p,
            len: seq.len(),
        })?;
        touched.insert((span.turn, span.role));
        out.replace_token(p, MASK_ID);
    }
    for (turn, role) in touched {
        out.set_provenance(turn, role, Provenance::Masked)?;
    }
    Ok(MaskedSequence {
        seq: out,
        original: seq.tokens().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::flatten_session;
    use crate::dialog::sequence_tests::{toy_session, toy_vocab};
    use crate::rng::stream;

    #[test]
    fn rate_zero_gives_empty_plans() {
        let seq = flatten_session(&toy_session(), &toy_vocab(), None).unwrap();
        let c = RMaskConfig {
            rate: 0.0,
            ..Default::default()
        };
        let (a, b) = draw_mask_pair(&seq, &c, &mut stream(0, "m", &[]));
        assert!(a.is_empty() && b.is_empty());
        assert_eq!(apply_mask(&seq, &a).unwrap().seq, seq);
    }

    #[test]
    fn full_mask_hits_only_belief_bodies() {
        let seq = flatten_session(&toy_session(), &toy_vocab(), None).unwrap();
        let c = RMaskConfig {
            rate: 1.0,
            ..Default::default()
        };
        let (a, _) = draw_mask_pair(&seq, &c, &mut stream(0, "m", &[]));
        let m = apply_mask(&seq, &a).unwrap();
        let b0 = seq.span(0, SpanRole::Belief).unwrap().inner();
        // "[restaurant] area north" is three tokens.
        assert_eq!(b0.len(), 3);
        assert!(b0.clone().all(|p| m.seq.tokens()[p] == MASK_ID));
        assert_eq!(m.seq.span(0, SpanRole::Belief).unwrap().provenance, Provenance::Masked);
        assert_eq!(m.seq.span(0, SpanRole::User).unwrap().provenance, Provenance::GroundTruth);
        assert_eq!(m.original, seq.tokens());
        for (p, &t) in m.seq.tokens().iter().enumerate() {
            if t == MASK_ID {
                let s = seq.span_at(p).unwrap();
                assert_eq!(s.role, SpanRole::Belief);
                assert!(s.inner().contains(&p));
            }
        }
    }

    #[test]
    fn generated_target_skips_ground_truth() {
        let seq = flatten_session(&toy_session(), &toy_vocab(), None).unwrap();
        let c = RMaskConfig {
            rate: 1.0,
            target: MaskTarget::GeneratedBelief,
            ..Default::default()
        };
        let (a, b) = draw_mask_pair(&seq, &c, &mut stream(0, "m", &[]));
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn out_of_range_position() {
        let seq = flatten_session(&toy_session(), &toy_vocab(), None).unwrap();
        let plan = MaskPlan {
            positions: [seq.len()].into(),
        };
        assert!(matches!(apply_mask(&seq, &plan), Err(Error::PositionOutOfRange { .. })));
    }
}
