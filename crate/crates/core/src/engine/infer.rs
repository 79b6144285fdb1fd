use serde::{Deserialize, Serialize};

use crate::corpus::{DbTracker, World};
use crate::dialog::{DialogSession, Provenance, SpanRole, TaggedSequence};
use crate::error::Result;
use crate::eval::{evaluate_corpus, GeneratedSession, Metrics, SessionVerdict, TurnRecord};
use crate::lm::{KvCache, SpanGenerator};
use crate::sampler::{context_budget, generate_span, parse_generated_belief, sequence_context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Belief, act and response are generated.
    EndToEnd,
    /// Belief and DB result come from the annotation.
    PolicyOpt,
}

fn run_session<M: SpanGenerator + ?Sized>(
    model: &M,
    session: &DialogSession,
    world: &World,
    mode: InferenceMode,
    max_span_len: usize,
) -> Result<GeneratedSession> {
    let budget = context_budget(model.max_len(), max_span_len);
    let mut seq = TaggedSequence::new();
    let mut cache = KvCache::new();
    let mut tracker = DbTracker::new();
    let mut diagnostics = Vec::new();
    let mut turns = Vec::with_capacity(session.turns.len());

    for turn in &session.turns {
        let t = turn.index;
        let mut gen = |seq: &TaggedSequence, role: SpanRole, diagnostics: &mut Vec<String>| {
            let ctx = sequence_context(seq, t, role, budget);
            generate_span(model, &mut cache, &ctx, role, max_span_len, diagnostics, t)
        };
        seq.push_span(t, SpanRole::User, &world.vocab.encode(&turn.user, t)?, Provenance::GroundTruth)?;

        let (belief, belief_provenance, db) = match mode {
            InferenceMode::EndToEnd => {
                let body = gen(&seq, SpanRole::Belief, &mut diagnostics)?;
                seq.push_span(t, SpanRole::Belief, &body, Provenance::Generated)?;
                let belief = parse_generated_belief(&body, world, t, &mut diagnostics);
                let db = tracker.step(&belief, world.database);
                seq.push_span(
                    t,
                    SpanRole::DbResult,
                    &world.vocab.encode(&db.to_tokens(), t)?,
                    Provenance::Generated,
                )?;
                (belief, Provenance::Generated, db)
            }
            InferenceMode::PolicyOpt => {
                let belief = turn.belief.clone();
                seq.push_span(
                    t,
                    SpanRole::Belief,
                    &world.vocab.encode(&belief.to_tokens(), t)?,
                    Provenance::GroundTruth,
                )?;
                tracker.step(&belief, world.database);
                seq.push_span(
                    t,
                    SpanRole::DbResult,
                    &world.vocab.encode(&turn.db.to_tokens(), t)?,
                    Provenance::GroundTruth,
                )?;
                (belief, Provenance::GroundTruth, turn.db)
            }
        };

        let act = gen(&seq, SpanRole::Act, &mut diagnostics)?;
        seq.push_span(t, SpanRole::Act, &act, Provenance::Generated)?;
        let response = gen(&seq, SpanRole::Response, &mut diagnostics)?;
        seq.push_span(t, SpanRole::Response, &response, Provenance::Generated)?;

        turns.push(TurnRecord {
            turn: t,
            belief,
            belief_provenance,
            active_domain: tracker.active().map(str::to_string),
            db,
            act: world.vocab.decode(&act),
            response: world.vocab.decode(&response),
        });
    }
    Ok(GeneratedSession {
        session_id: session.session_id.clone(),
        turns,
        seq,
        diagnostics,
    })
}

/// Generates every belief, act and response of `session` from the
/// model's own history; only user utterances come from the corpus.
pub fn run_end_to_end<M: SpanGenerator + ?Sized>(
    model: &M,
    session: &DialogSession,
    world: &World,
    max_span_len: usize,
) -> Result<GeneratedSession> {
    run_session(model, session, world, InferenceMode::EndToEnd, max_span_len)
}

/// Like [`run_end_to_end`] with annotated beliefs and DB results.
pub fn run_policy_opt<M: SpanGenerator + ?Sized>(
    model: &M,
    session: &DialogSession,
    world: &World,
    max_span_len: usize,
) -> Result<GeneratedSession> {
    run_session(model, session, world, InferenceMode::PolicyOpt, max_span_len)
}

pub fn run_inference<M: SpanGenerator + ?Sized>(
    model: &M,
    sessions: &[DialogSession],
    world: &World,
    mode: InferenceMode,
    max_span_len: usize,
) -> Result<Vec<GeneratedSession>> {
    sessions
        .iter()
        .map(|s| run_session(model, s, world, mode, max_span_len))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub verdicts: Vec<SessionVerdict>,
    pub records: Vec<GeneratedSession>,
}

pub fn evaluate_model<M: SpanGenerator + ?Sized>(
    model: &M,
    sessions: &[DialogSession],
    world: &World,
    mode: InferenceMode,
    max_span_len: usize,
) -> Result<Evaluation> {
    let records = run_inference(model, sessions, world, mode, max_span_len)?;
    let (metrics, verdicts) = evaluate_corpus(&records, sessions, world.ontology, world.database)?;
    Ok(Evaluation {
        metrics,
        verdicts,
        records,
    })
}
