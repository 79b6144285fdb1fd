//! Dialog data model and the session-level sequence representation.

mod belief;
mod sequence;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use belief::{parse_belief_span, BeliefParse, BeliefState};
pub use sequence::{build_context, flatten_session, Provenance, Span, TaggedSequence};

#[cfg(test)]
pub(crate) use sequence::tests as sequence_tests;

use crate::corpus::ontology::{domain_token, Ontology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanRole {
    User,
    Belief,
    DbResult,
    Act,
    Response,
}

impl SpanRole {
    pub const ALL: [SpanRole; 5] = [
        SpanRole::User,
        SpanRole::Belief,
        SpanRole::DbResult,
        SpanRole::Act,
        SpanRole::Response,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<SpanRole> {
        SpanRole::ALL.get(self.index() + 1).copied()
    }
}

impl fmt::Display for SpanRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpanRole::User => "user",
            SpanRole::Belief => "belief",
            SpanRole::DbResult => "db",
            SpanRole::Act => "act",
            SpanRole::Response => "response",
        };
        f.write_str(s)
    }
}

/// Matched-entity count, bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchBucket {
    Zero,
    One,
    Two,
    Three,
    Many,
}

impl MatchBucket {
    pub fn from_count(n: usize) -> Self {
        match n {
            0 => MatchBucket::Zero,
            1 => MatchBucket::One,
            2 => MatchBucket::Two,
            3 => MatchBucket::Three,
            _ => MatchBucket::Many,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            MatchBucket::Zero => "[db_0]",
            MatchBucket::One => "[db_1]",
            MatchBucket::Two => "[db_2]",
            MatchBucket::Three => "[db_3]",
            MatchBucket::Many => "[db_many]",
        }
    }

    /// JSON label used by the corpus schema.
    pub fn label(self) -> &'static str {
        match self {
            MatchBucket::Zero => "0",
            MatchBucket::One => "1",
            MatchBucket::Two => "2",
            MatchBucket::Three => "3",
            MatchBucket::Many => ">3",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "0" => MatchBucket::Zero,
            "1" => MatchBucket::One,
            "2" => MatchBucket::Two,
            "3" => MatchBucket::Three,
            ">3" => MatchBucket::Many,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DbResult {
    pub bucket: MatchBucket,
    pub booking_ok: bool,
}

impl DbResult {
    pub fn from_count(n: usize) -> Self {
        let bucket = MatchBucket::from_count(n);
        Self {
            bucket,
            booking_ok: bucket != MatchBucket::Zero,
        }
    }

    pub fn to_tokens(self) -> Vec<String> {
        let book = if self.booking_ok { "[book_ok]" } else { "[book_fail]" };
        vec![self.bucket.token().to_string(), book.to_string()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActType {
    Inform,
    Request,
    Recommend,
    Book,
    Select,
    General,
}

impl ActType {
    pub const ALL: [ActType; 6] = [
        ActType::Inform,
        ActType::Request,
        ActType::Recommend,
        ActType::Book,
        ActType::Select,
        ActType::General,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActType::Inform => "inform",
            ActType::Request => "request",
            ActType::Recommend => "recommend",
            ActType::Book => "book",
            ActType::Select => "select",
            ActType::General => "general",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ActType::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn token(self) -> String {
        format!("[{}]", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActTriple {
    pub domain: String,
    pub act: ActType,
    pub slot: String,
}

/// Ordered list of (domain, act, slot) triples. `none` fills the slot
/// position for slot-less acts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemAct {
    pub triples: Vec<ActTriple>,
}

impl SystemAct {
    pub fn to_tokens(&self) -> Vec<String> {
        self.triples
            .iter()
            .flat_map(|t| [domain_token(&t.domain), t.act.token(), t.slot.clone()])
            .collect()
    }

    /// Best-effort parse of an act span; malformed triples are skipped.
    pub fn parse<S: AsRef<str>>(tokens: &[S], ontology: &Ontology) -> Self {
        let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
        let mut triples = Vec::new();
        let mut i = 0;
        while i + 3 <= toks.len() {
            let domain = toks[i].strip_prefix('[').and_then(|s| s.strip_suffix(']'));
            let act = toks[i + 1]
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .and_then(ActType::from_name);
            let slot = toks[i + 2];
            match (domain, act) {
                (Some(d), Some(a))
                    if ontology.has_domain(d) && (slot == "none" || ontology.is_known_slot(d, slot)) =>
                {
                    triples.push(ActTriple {
                        domain: d.to_string(),
                        act: a,
                        slot: slot.to_string(),
                    });
                    i += 3;
                }
                _ => i += 1,
            }
        }
        Self { triples }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogTurn {
    pub index: usize,
    pub user: Vec<String>,
    pub belief: BeliefState,
    pub db: DbResult,
    pub act: SystemAct,
    pub response: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainGoal {
    pub constraints: BTreeMap<String, String>,
    #[serde(default)]
    pub requests: Vec<String>,
}

pub type Goal = BTreeMap<String, DomainGoal>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogSession {
    pub session_id: String,
    pub goal: Goal,
    pub turns: Vec<DialogTurn>,
}

impl DialogSession {
    /// Checks structural invariants: at least one turn, consecutive
    /// indices, goal domains known, responses free of non-placeholder
    /// bracket tokens.
    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::InvalidDialog(format!("{}: no turns", self.session_id)));
        }
        for (i, t) in self.turns.iter().enumerate() {
            if t.index != i {
                return Err(Error::InvalidDialog(format!(
                    "{}: turn index {} at position {i}",
                    self.session_id, t.index
                )));
            }
            if let Some(bad) = t
                .response
                .iter()
                .find(|w| w.starts_with('[') && !(w.starts_with("[value_") && w.ends_with(']')))
            {
                return Err(Error::InvalidDialog(format!(
                    "{}: turn {i}: response token `{bad}` is not a placeholder",
                    self.session_id
                )));
            }
        }
        if let Some(d) = self.goal.keys().find(|d| !ontology.has_domain(d)) {
            return Err(Error::InvalidDialog(format!("{}: goal domain `{d}` unknown", self.session_id)));
        }
        Ok(())
    }

    pub fn goal_touches(&self, domain: &str) -> bool {
        self.goal.contains_key(domain)
    }
}
