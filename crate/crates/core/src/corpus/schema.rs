//! On-disk corpus format: one UTF-8 JSON document per split.
//!
//! ```text
//! {"ontology": {domain: {"informable": {slot: [value, ...]}, "requestable": [slot, ...]}},
//!  "database": {domain: [entity, ...]},
//!  "sessions": [{"session_id", "goal": {domain: {"constraints": {slot: value}, "requests": [slot]}},
//!                "turns": [{"user", "belief": {domain: {slot: value}}, "db": {"bucket", "booking_ok"},
//!                           "act": [[domain, act, slot], ...], "response"}]}]}
//! ```
//!
//! Unknown fields are rejected at every level.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ontology::{Database, Entity, Ontology};
use crate::dialog::{
    ActTriple, ActType, BeliefState, DbResult, DialogSession, DialogTurn, DomainGoal, MatchBucket, SystemAct,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    ontology: Ontology,
    database: BTreeMap<String, Vec<Entity>>,
    sessions: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    session_id: String,
    goal: BTreeMap<String, DomainGoal>,
    turns: Vec<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDb {
    bucket: String,
    booking_ok: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTurn {
    user: String,
    belief: BTreeMap<String, BTreeMap<String, String>>,
    db: RawDb,
    act: Vec<(String, String, String)>,
    response: String,
}

/// Contents of one corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFile {
    pub ontology: Ontology,
    pub database: Database,
    pub sessions: Vec<DialogSession>,
}

struct Ctx<'a> {
    file: &'a str,
    session: String,
}

impl Ctx<'_> {
    fn err(&self, path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.to_string(),
            session: self.session.clone(),
            path: path.into(),
            message: message.into(),
        }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn parse_corpus(text: &str, file: &str) -> Result<CorpusFile> {
    let top = Ctx {
        file,
        session: "-".into(),
    };
    let raw: RawCorpus = serde_json::from_str(text).map_err(|e| top.err("$", e.to_string()))?;
    raw.ontology.validate().map_err(|e| top.err("ontology", e.to_string()))?;
    let database = Database::new(raw.database, &raw.ontology).map_err(|e| top.err("database", e.to_string()))?;
    let ontology = raw.ontology;

    let mut sessions = Vec::with_capacity(raw.sessions.len());
    for (si, value) in raw.sessions.into_iter().enumerate() {
        let id = value
            .get("session_id")
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_string();
        let ctx = Ctx { file, session: id };
        let base = format!("sessions[{si}]");
        let rs: RawSession = serde_json::from_value(value).map_err(|e| ctx.err(&base, e.to_string()))?;
        sessions.push(convert_session(rs, &ontology, &ctx, &base)?);
    }
    Ok(CorpusFile {
        ontology,
        database,
        sessions,
    })
}

fn convert_session(rs: RawSession, ontology: &Ontology, ctx: &Ctx, base: &str) -> Result<DialogSession> {
    for (domain, g) in &rs.goal {
        let p = format!("{base}.goal.{domain}");
        if !ontology.has_domain(domain) {
            return Err(ctx.err(p, format!("unknown domain `{domain}`")));
        }
        for (slot, value) in &g.constraints {
            if !ontology.is_informable(domain, slot) {
                return Err(ctx.err(format!("{p}.constraints.{slot}"), format!("unknown slot `{slot}`")));
            }
            if !ontology.value_allowed(domain, slot, value) {
                return Err(ctx.err(format!("{p}.constraints.{slot}"), format!("value `{value}` not in ontology")));
            }
        }
        if let Some(r) = g.requests.iter().find(|r| !ontology.is_known_slot(domain, r)) {
            return Err(ctx.err(format!("{p}.requests"), format!("unknown slot `{r}`")));
        }
    }

    let mut turns = Vec::with_capacity(rs.turns.len());
    for (ti, value) in rs.turns.into_iter().enumerate() {
        let p = format!("{base}.turns[{ti}]");
        let rt: RawTurn = serde_json::from_value(value).map_err(|e| ctx.err(&p, e.to_string()))?;

        let mut belief = BeliefState::new();
        for (domain, slots) in &rt.belief {
            for (slot, v) in slots {
                belief
                    .insert_checked(domain, slot, v, ontology)
                    .map_err(|e| ctx.err(format!("{p}.belief.{domain}.{slot}"), e.to_string()))?;
            }
        }
        let bucket = MatchBucket::from_label(&rt.db.bucket)
            .ok_or_else(|| ctx.err(format!("{p}.db.bucket"), format!("bad bucket `{}`", rt.db.bucket)))?;

        let mut triples = Vec::with_capacity(rt.act.len());
        for (ai, (domain, act, slot)) in rt.act.into_iter().enumerate() {
            let ap = format!("{p}.act[{ai}]");
            if !ontology.has_domain(&domain) {
                return Err(ctx.err(ap, format!("unknown domain `{domain}`")));
            }
            let act = ActType::from_name(&act).ok_or_else(|| ctx.err(&ap, format!("unknown act `{act}`")))?;
            if slot != "none" && !ontology.is_known_slot(&domain, &slot) {
                return Err(ctx.err(ap, format!("unknown slot `{slot}`")));
            }
            triples.push(ActTriple { domain, act, slot });
        }

        turns.push(DialogTurn {
            index: ti,
            user: words(&rt.user),
            belief,
            db: DbResult {
                bucket,
                booking_ok: rt.db.booking_ok,
            },
            act: SystemAct { triples },
            response: words(&rt.response),
        });
    }

    let session = DialogSession {
        session_id: rs.session_id,
        goal: rs.goal,
        turns,
    };
    session
        .validate(ontology)
        .map_err(|e| ctx.err(base, e.to_string()))?;
    Ok(session)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, &path.display().to_string())
}

fn turn_to_raw(t: &DialogTurn) -> RawTurn {
    RawTurn {
        user: t.user.join(" "),
        belief: t.belief.constraints().clone(),
        db: RawDb {
            bucket: t.db.bucket.label().to_string(),
            booking_ok: t.db.booking_ok,
        },
        act: t
            .act
            .triples
            .iter()
            .map(|a| (a.domain.clone(), a.act.name().to_string(), a.slot.clone()))
            .collect(),
        response: t.response.join(" "),
    }
}

pub fn corpus_to_json(
    ontology: &Ontology,
    database: &Database,
    sessions: &[DialogSession],
) -> Result<String> {
    let sessions = sessions
        .iter()
        .map(|s| {
            let turns = s
                .turns
                .iter()
                .map(|t| serde_json::to_value(turn_to_raw(t)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            serde_json::to_value(RawSession {
                session_id: s.session_id.clone(),
                goal: s.goal.clone(),
                turns,
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let raw = RawCorpus {
        ontology: ontology.clone(),
        database: database.tables().clone(),
        sessions,
    };
    Ok(serde_json::to_string_pretty(&raw)?)
}

pub fn save_corpus(
    path: impl AsRef<Path>,
    ontology: &Ontology,
    database: &Database,
    sessions: &[DialogSession],
) -> Result<()> {
    let path = path.as_ref();
    let text = corpus_to_json(ontology, database, sessions)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
