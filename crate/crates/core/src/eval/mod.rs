//! Inform, Success and BLEU over generated sessions.
//!
//! Matching rules:
//!
//! * A turn belongs to the active domain of the belief it was answered
//!   with.
//! * Inform holds when every goal domain with constraints either has no
//!   `name` slot (nothing to offer) or has a turn of that domain whose
//!   response contains `[value_name]` while the entities matching that
//!   turn's belief are non-empty and all satisfy the goal constraints.
//! * Success additionally needs `[value_<slot>]` for every requested slot
//!   of every goal domain in some response of that domain's turns.

mod bleu;

use serde::{Deserialize, Serialize};

pub use bleu::{corpus_bleu, BLEU_SMOOTHING};

use crate::corpus::db::{entity_matches, matching_entities};
use crate::corpus::ontology::{placeholder, NAME_SLOT};
use crate::corpus::{Database, Ontology};
use crate::dialog::{BeliefState, DbResult, DialogSession, Goal, Provenance, TaggedSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub belief: BeliefState,
    pub belief_provenance: Provenance,
    pub active_domain: Option<String>,
    pub db: DbResult,
    pub act: Vec<String>,
    /// Delexicalized response tokens.
    pub response: Vec<String>,
}

/// Output of running a model over one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSession {
    pub session_id: String,
    pub turns: Vec<TurnRecord>,
    pub seq: TaggedSequence,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    pub n_sessions: usize,
}

pub fn combined_score(inform: f64, success: f64, bleu: f64) -> f64 {
    (inform + success) * 0.5 + bleu
}

impl Metrics {
    pub fn new(inform: f64, success: f64, bleu: f64, n_sessions: usize) -> Self {
        Self {
            inform,
            success,
            bleu,
            combined: combined_score(inform, success, bleu),
            n_sessions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionVerdict {
    pub session_id: String,
    pub inform: bool,
    pub success: bool,
}

fn domain_turns<'a>(record: &'a GeneratedSession, domain: &'a str) -> impl Iterator<Item = &'a TurnRecord> {
    record
        .turns
        .iter()
        .filter(move |t| t.active_domain.as_deref() == Some(domain))
}

fn mentions(t: &TurnRecord, slot: &str) -> bool {
    let p = placeholder(slot);
    t.response.contains(&p)
}

fn offers_valid_entity(t: &TurnRecord, domain: &str, goal: &std::collections::BTreeMap<String, String>, db: &Database) -> bool {
    if !mentions(t, NAME_SLOT) {
        return false;
    }
    let empty = Default::default();
    let belief = t.belief.domain(domain).unwrap_or(&empty);
    let found = matching_entities(db, domain, belief);
    !found.is_empty() && found.iter().all(|e| entity_matches(e, goal))
}

pub fn inform_for_session(record: &GeneratedSession, goal: &Goal, ontology: &Ontology, db: &Database) -> bool {
    goal.iter()
        .filter(|(_, g)| !g.constraints.is_empty())
        .all(|(domain, g)| {
            !ontology.requires_offer(domain)
                || domain_turns(record, domain).any(|t| offers_valid_entity(t, domain, &g.constraints, db))
        })
}

pub fn success_for_session(record: &GeneratedSession, goal: &Goal, ontology: &Ontology, db: &Database) -> bool {
    inform_for_session(record, goal, ontology, db)
        && goal.iter().all(|(domain, g)| {
            g.requests
                .iter()
                .all(|slot| domain_turns(record, domain).any(|t| mentions(t, slot)))
        })
}

/// Scores generated sessions against the corpus sessions they came from
/// (same order).
pub fn evaluate_corpus(
    records: &[GeneratedSession],
    sessions: &[DialogSession],
    ontology: &Ontology,
    db: &Database,
) -> Result<(Metrics, Vec<SessionVerdict>)> {
    if records.len() != sessions.len() {
        return Err(Error::Shape(format!(
            "{} generated records for {} sessions",
            records.len(),
            sessions.len()
        )));
    }
    if sessions.is_empty() {
        return Err(Error::Empty("evaluation sessions"));
    }
    let mut verdicts = Vec::with_capacity(sessions.len());
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    for (r, s) in records.iter().zip(sessions) {
        if r.session_id != s.session_id {
            return Err(Error::Shape(format!(
                "record `{}` does not match session `{}`",
                r.session_id, s.session_id
            )));
        }
        verdicts.push(SessionVerdict {
            session_id: s.session_id.clone(),
            inform: inform_for_session(r, &s.goal, ontology, db),
            success: success_for_session(r, &s.goal, ontology, db),
        });
        for (i, turn) in s.turns.iter().enumerate() {
            candidates.push(r.turns.get(i).map(|t| t.response.clone()).unwrap_or_default());
            references.push(turn.response.clone());
        }
    }
    let n = sessions.len() as f64;
    let inform = 100.0 * verdicts.iter().filter(|v| v.inform).count() as f64 / n;
    let success = 100.0 * verdicts.iter().filter(|v| v.success).count() as f64 / n;
    let bleu = corpus_bleu(&candidates, &references)?;
    Ok((Metrics::new(inform, success, bleu, sessions.len()), verdicts))
}
