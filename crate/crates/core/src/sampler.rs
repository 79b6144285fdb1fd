//! Mixed ground-truth/generated training sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DbTracker, World};
use crate::dialog::{flatten_session, parse_belief_span, BeliefState, DialogSession, Provenance, SpanRole, TaggedSequence};
use crate::error::{Error, Result};
use crate::lm::{KvCache, SpanGenerator};
use crate::vocab::{end_marker_id, start_marker_id, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    BeliefOnly,
    ActionOnly,
    AtMostOne,
    ActionFollowsBelief,
    RandomIndependent,
}

impl SamplingStrategy {
    pub const ALL: [SamplingStrategy; 5] = [
        SamplingStrategy::BeliefOnly,
        SamplingStrategy::ActionOnly,
        SamplingStrategy::AtMostOne,
        SamplingStrategy::ActionFollowsBelief,
        SamplingStrategy::RandomIndependent,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    Mixed,
    GroundTruth,
}

/// Which version of the history generation is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextAttr {
    pub prev_turns: ContextSource,
    pub current_turn: ContextSource,
}

impl Default for ContextAttr {
    fn default() -> Self {
        Self {
            prev_turns: ContextSource::Mixed,
            current_turn: ContextSource::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub strategy: SamplingStrategy,
    pub context: ContextAttr,
    /// Under `AtMostOne`, whether act/response replacement after a kept
    /// belief is its own ε-draw (true) or certain (false).
    pub second_draw: bool,
    /// Longest generated span body before truncation.
    pub max_span_len: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            strategy: SamplingStrategy::BeliefOnly,
            context: ContextAttr::default(),
            second_draw: true,
            max_span_len: 48,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if self.max_span_len == 0 {
            return Err(Error::Config("max_span_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TurnDecision {
    pub replace_belief: bool,
    pub replace_act_resp: bool,
}

fn bernoulli(rng: &mut impl Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

pub fn decide_turn(rng: &mut impl Rng, config: &SamplerConfig) -> TurnDecision {
    let eps = config.epsilon;
    let (b, a) = match config.strategy {
        SamplingStrategy::BeliefOnly => (bernoulli(rng, eps), false),
        SamplingStrategy::ActionOnly => (false, bernoulli(rng, eps)),
        SamplingStrategy::ActionFollowsBelief => {
            let x = bernoulli(rng, eps);
            (x, x)
        }
        SamplingStrategy::RandomIndependent => {
            let b = bernoulli(rng, eps);
            (b, bernoulli(rng, eps))
        }
        SamplingStrategy::AtMostOne => {
            if bernoulli(rng, eps) {
                (true, false)
            } else if config.second_draw {
                (false, bernoulli(rng, eps))
            } else {
                (false, true)
            }
        }
    };
    TurnDecision {
        replace_belief: b,
        replace_act_resp: a,
    }
}

/// Builds `prev ++ current ++ [marker]`, dropping whole leading turns of
/// `prev` until the result fits in `budget` tokens. When even `current`
/// alone is too long its head is cut.
///
/// `prev_turn_starts` are the turn-start offsets within `prev`.
pub fn assemble_context(
    prev: &[TokenId],
    prev_turn_starts: &[usize],
    current: &[TokenId],
    marker: TokenId,
    budget: usize,
) -> Vec<TokenId> {
    let fixed = current.len() + 1;
    let start = prev_turn_starts
        .iter()
        .copied()
        .chain(std::iter::once(prev.len()))
        .find(|&s| prev.len() - s + fixed <= budget)
        .unwrap_or(prev.len());
    let mut ctx = Vec::with_capacity(prev.len() - start + fixed);
    ctx.extend_from_slice(&prev[start..]);
    ctx.extend_from_slice(current);
    if ctx.len() + 1 > budget {
        let cut = ctx.len() + 1 - budget.max(1);
        ctx.drain(..cut);
    }
    ctx.push(marker);
    ctx
}

/// Context for span `(turn, role)` of `seq`, which must end right before
/// that span.
pub fn sequence_context(seq: &TaggedSequence, turn: usize, role: SpanRole, budget: usize) -> Vec<TokenId> {
    let starts = seq.turn_starts();
    let cur_start = seq.span(turn, SpanRole::User).map_or(seq.len(), |s| s.start);
    let prev_starts: Vec<usize> = starts.into_iter().filter(|&s| s < cur_start).collect();
    assemble_context(
        &seq.tokens()[..cur_start],
        &prev_starts,
        &seq.tokens()[cur_start..],
        start_marker_id(role),
        budget,
    )
}

/// Token budget for a generation context, leaving room for the span.
pub fn context_budget(max_len: usize, max_span_len: usize) -> usize {
    max_len.saturating_sub(max_span_len + 1).max(max_len / 2).max(1)
}

/// Greedily generates the body of a `role` span after `context` (which
/// already ends in the role's start marker). Spans that hit the length
/// limit are cut and reported in `diagnostics`.
pub fn generate_span<M: SpanGenerator + ?Sized>(
    model: &M,
    cache: &mut KvCache,
    context: &[TokenId],
    role: SpanRole,
    max_span_len: usize,
    diagnostics: &mut Vec<String>,
    turn: usize,
) -> Result<Vec<TokenId>> {
    let stop = end_marker_id(role);
    let room = model.max_len().saturating_sub(context.len());
    let mut out = model.generate_cached(cache, context, stop, (max_span_len + 1).min(room))?;
    if out.last() == Some(&stop) {
        out.pop();
    } else {
        diagnostics.push(format!(
            "turn {turn}: {role} span truncated at {} tokens",
            out.len()
        ));
    }
    Ok(out)
}

/// Decodes and parses a generated belief body.
pub fn parse_generated_belief(body: &[TokenId], world: &World, turn: usize, diagnostics: &mut Vec<String>) -> BeliefState {
    let parse = parse_belief_span(&world.vocab.decode(body), world.ontology);
    for d in parse.dropped {
        diagnostics.push(format!("turn {turn}: belief: {d}"));
    }
    parse.state
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSequence {
    pub seq: TaggedSequence,
    pub decisions: Vec<TurnDecision>,
    pub diagnostics: Vec<String>,
}

/// Flattens `session`, replacing spans with greedy generations as
/// decided per turn.
///
/// A generated belief is parsed and the DB span recomputed from it. Once
/// any belief has been replaced the tracker history differs from the
/// annotation, so later DB spans are recomputed as well; they keep
/// ground-truth provenance when the result matches the annotation.
pub fn build_mixed_sequence<M: SpanGenerator + ?Sized, R: Rng>(
    model: &M,
    session: &DialogSession,
    world: &World,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MixedSequence> {
    config.validate()?;
    let gt = flatten_session(session, world.vocab, None)?;
    let decisions: Vec<TurnDecision> = session.turns.iter().map(|_| decide_turn(rng, config)).collect();
    if decisions.iter().all(|d| !d.replace_belief && !d.replace_act_resp) {
        return Ok(MixedSequence {
            seq: gt,
            decisions,
            diagnostics: Vec::new(),
        });
    }

    let budget = context_budget(model.max_len(), config.max_span_len);
    let mut seq = TaggedSequence::new();
    let mut cache = KvCache::new();
    let mut tracker = DbTracker::new();
    let mut diverged = false;
    let mut diagnostics = Vec::new();

    for (turn, dec) in session.turns.iter().zip(&decisions) {
        let t = turn.index;
        let gt_body = |role: SpanRole| gt.content(t, role).expect("ground-truth span").to_vec();
        let context_for = |seq: &TaggedSequence, role: SpanRole| -> Vec<TokenId> {
            let prev_end = seq.span(t, SpanRole::User).map_or(seq.len(), |s| s.start);
            let gt_turn = gt.span(t, SpanRole::User).expect("ground-truth turn").start;
            let gt_span = gt.span(t, role).expect("ground-truth span").start;
            let (prev, prev_starts): (&[TokenId], Vec<usize>) = match config.context.prev_turns {
                ContextSource::Mixed => (&seq.tokens()[..prev_end], seq.turn_starts()),
                ContextSource::GroundTruth => (&gt.tokens()[..gt_turn], gt.turn_starts()),
            };
            let prev_starts: Vec<usize> = prev_starts.into_iter().filter(|&s| s < prev.len()).collect();
            let current: &[TokenId] = match config.context.current_turn {
                ContextSource::Mixed => &seq.tokens()[prev_end..],
                ContextSource::GroundTruth => &gt.tokens()[gt_turn..gt_span],
            };
            assemble_context(prev, &prev_starts, current, start_marker_id(role), budget)
        };

        seq.push_span(t, SpanRole::User, &gt_body(SpanRole::User), Provenance::GroundTruth)?;

        let belief = if dec.replace_belief {
            let ctx = context_for(&seq, SpanRole::Belief);
            let body = generate_span(model, &mut cache, &ctx, SpanRole::Belief, config.max_span_len, &mut diagnostics, t)?;
            seq.push_span(t, SpanRole::Belief, &body, Provenance::Generated)?;
            diverged = true;
            parse_generated_belief(&body, world, t, &mut diagnostics)
        } else {
            seq.push_span(t, SpanRole::Belief, &gt_body(SpanRole::Belief), Provenance::GroundTruth)?;
            turn.belief.clone()
        };

        let db = tracker.step(&belief, world.database);
        if diverged {
            let body = world.vocab.encode(&db.to_tokens(), t)?;
            let prov = if !dec.replace_belief && db == turn.db {
                Provenance::GroundTruth
            } else {
                Provenance::Generated
            };
            seq.push_span(t, SpanRole::DbResult, &body, prov)?;
        } else {
            seq.push_span(t, SpanRole::DbResult, &gt_body(SpanRole::DbResult), Provenance::GroundTruth)?;
        }

        for role in [SpanRole::Act, SpanRole::Response] {
            if dec.replace_act_resp {
                let ctx = context_for(&seq, role);
                let body = generate_span(model, &mut cache, &ctx, role, config.max_span_len, &mut diagnostics, t)?;
                seq.push_span(t, role, &body, Provenance::Generated)?;
            } else {
                seq.push_span(t, role, &gt_body(role), Provenance::GroundTruth)?;
            }
        }
    }
    Ok(MixedSequence {
        seq,
        decisions,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn cfg(strategy: SamplingStrategy, epsilon: f64) -> SamplerConfig {
        SamplerConfig {
            epsilon,
            strategy,
            ..Default::default()
        }
    }

    #[test]
    fn extremes() {
        let mut rng = stream(1, "t", &[]);
        for s in SamplingStrategy::ALL {
            for _ in 0..100 {
                assert_eq!(decide_turn(&mut rng, &cfg(s, 0.0)), TurnDecision::default());
            }
        }
        let d = decide_turn(&mut rng, &cfg(SamplingStrategy::ActionFollowsBelief, 1.0));
        assert!(d.replace_belief && d.replace_act_resp);
        let d = decide_turn(&mut rng, &cfg(SamplingStrategy::AtMostOne, 1.0));
        assert!(d.replace_belief && !d.replace_act_resp);
    }

    #[test]
    fn at_most_one_without_second_draw() {
        let mut rng = stream(1, "t", &[]);
        let c = SamplerConfig {
            second_draw: false,
            ..cfg(SamplingStrategy::AtMostOne, 0.0)
        };
        let d = decide_turn(&mut rng, &c);
        assert!(!d.replace_belief && d.replace_act_resp);
    }

    #[test]
    fn epsilon_is_validated() {
        assert!(cfg(SamplingStrategy::BeliefOnly, 1.5).validate().is_err());
        assert!(cfg(SamplingStrategy::BeliefOnly, -0.1).validate().is_err());
    }

    #[test]
    fn context_keeps_whole_turns() {
        // Two previous turns of 4 tokens each, current prefix of 2.
        let prev = [10, 11, 12, 13, 20, 21, 22, 23];
        let ctx = assemble_context(&prev, &[0, 4], &[30, 31], 99, 8);
        assert_eq!(ctx, vec![20, 21, 22, 23, 30, 31, 99]);
        let ctx = assemble_context(&prev, &[0, 4], &[30, 31], 99, 100);
        assert_eq!(ctx.len(), 11);
        let ctx = assemble_context(&prev, &[0, 4], &[30, 31, 32, 33], 99, 3);
        assert_eq!(ctx, vec![32, 33, 99]);
    }
}
