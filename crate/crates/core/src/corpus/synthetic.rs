//! Template-grammar mini-world: ontology, entity tables and annotated
//! sessions whose annotations are consistent by construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::db::DbTracker;
use super::delex::delexicalize;
use super::ontology::{Database, DomainOntology, Entity, Ontology, NAME_SLOT};
use crate::dialog::{
    ActTriple, ActType, BeliefState, DbResult, DialogSession, DialogTurn, DomainGoal, MatchBucket, SystemAct,
};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorldConfig {
    pub domains: usize,
    pub slots_per_domain: usize,
    pub entities_per_domain: usize,
    pub values_per_slot: usize,
    pub sessions: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Seeds the world itself (value pools, entity table).
    pub grammar_seed: u64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        Self {
            domains: 2,
            slots_per_domain: 3,
            entities_per_domain: 24,
            values_per_slot: 4,
            sessions: 500,
            min_turns: 1,
            max_turns: 6,
            grammar_seed: 17,
        }
    }
}

const DOMAINS: [&str; 5] = ["restaurant", "hotel", "attraction", "cinema", "museum"];

const SLOT_CATALOG: [(&str, &[&str]); 6] = [
    ("area", &["north", "south", "east", "west", "centre", "riverside", "airport", "harbour"]),
    ("price", &["cheap", "moderate", "expensive", "budget", "luxury", "mid", "premium", "free"]),
    ("food", &["italian", "indian", "chinese", "french", "thai", "british", "greek", "korean"]),
    ("stars", &["one", "two", "three", "four", "five", "six", "seven", "eight"]),
    ("parking", &["yes", "no", "paid", "street", "garage", "valet", "permit", "nearby"]),
    ("style", &["modern", "classic", "rustic", "quirky", "cosy", "grand", "minimal", "vintage"]),
];

const REQUESTABLE: [&str; 3] = ["phone", "address", "postcode"];

const NAME_ADJ: [&str; 12] = [
    "golden", "red", "silver", "little", "royal", "old", "blue", "green", "grand", "happy", "lucky", "quiet",
];
const NAME_NOUN: [&str; 12] = [
    "dragon", "lion", "oak", "garden", "star", "river", "bridge", "castle", "moon", "anchor", "crown", "fox",
];
const STREETS: [&str; 6] = ["mill", "station", "castle", "king", "bridge", "market"];

fn slot_phrase(slot: &str, value: &str, rng: &mut StreamRng) -> String {
    let options: Vec<String> = match slot {
        "area" => vec![format!("in the {value}"), format!("in the {value} area")],
        "price" => vec![format!("that is {value}"), format!("in the {value} price range")],
        "food" => vec![format!("serving {value} food"), format!("with {value} food")],
        "stars" => vec![format!("with {value} stars"), format!("rated {value} stars")],
        _ => vec![format!("with {slot} {value}"), format!("where {slot} is {value}")],
    };
    options.choose(rng).expect("non-empty").clone()
}

fn check(config: &SyntheticWorldConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Config(m.to_string()));
    if config.domains == 0
        || config.slots_per_domain == 0
        || config.entities_per_domain == 0
        || config.values_per_slot == 0
        || config.sessions == 0
        || config.min_turns == 0
    {
        return bad("all synthetic-world counts must be >= 1");
    }
    if config.domains > DOMAINS.len() {
        return bad("at most 5 domains");
    }
    if config.slots_per_domain > SLOT_CATALOG.len() {
        return bad("at most 6 informable slots per domain");
    }
    if config.values_per_slot > 8 {
        return bad("at most 8 values per slot");
    }
    if config.entities_per_domain > NAME_ADJ.len() * NAME_NOUN.len() {
        return bad("too many entities per domain");
    }
    if config.max_turns < config.min_turns {
        return bad("max_turns < min_turns");
    }
    Ok(())
}

/// Builds the ontology and database of the mini-world.
pub fn generate_world(config: &SyntheticWorldConfig) -> Result<(Ontology, Database)> {
    check(config)?;
    let mut rng = stream(config.grammar_seed, "world", &[]);
    let mut domains = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (di, &domain) in DOMAINS.iter().take(config.domains).enumerate() {
        // Rotate the catalog so domains differ in their slot sets.
        let slots: Vec<(&str, &[&str])> = (0..config.slots_per_domain)
            .map(|k| SLOT_CATALOG[(k + di) % SLOT_CATALOG.len()])
            .collect();

        let mut names: Vec<String> = NAME_ADJ
            .iter()
            .flat_map(|a| NAME_NOUN.iter().map(move |n| format!("{a} {n}")))
            .collect();
        names.shuffle(&mut rng);
        names.truncate(config.entities_per_domain);
        names.sort();

        let mut informable = BTreeMap::new();
        for (slot, pool) in &slots {
            let values: Vec<String> = pool[..config.values_per_slot].iter().map(|s| s.to_string()).collect();
            informable.insert(slot.to_string(), values);
        }
        informable.insert(NAME_SLOT.to_string(), names.clone());

        let mut rows = Vec::with_capacity(names.len());
        for name in &names {
            let mut e = Entity::new();
            e.insert(NAME_SLOT.to_string(), name.clone());
            for (slot, pool) in &slots {
                let v = pool[rng.gen_range(0..config.values_per_slot)];
                e.insert(slot.to_string(), v.to_string());
            }
            e.insert("phone".into(), format!("01223 {:06}", rng.gen_range(0..1_000_000)));
            e.insert(
                "address".into(),
                format!("{} {} road", rng.gen_range(1..99), STREETS.choose(&mut rng).expect("non-empty")),
            );
            e.insert(
                "postcode".into(),
                format!("cb{} {}{}", rng.gen_range(1..9), rng.gen_range(1..9), ["aa", "bq", "dp", "rs"].choose(&mut rng).expect("non-empty")),
            );
            rows.push(e);
        }
        domains.insert(
            domain.to_string(),
            DomainOntology {
                informable,
                requestable: REQUESTABLE.iter().map(|s| s.to_string()).collect(),
            },
        );
        tables.insert(domain.to_string(), rows);
    }
    let ontology = Ontology::new(domains)?;
    let database = Database::new(tables, &ontology)?;
    Ok((ontology, database))
}

struct DomainPlan {
    domain: String,
    entity: Entity,
    chunks: Vec<Vec<String>>,
    requests: Vec<String>,
    thanks: bool,
}

struct SessionPlan {
    domains: Vec<DomainPlan>,
    goodbye: bool,
}

impl SessionPlan {
    /// Upper bound on turns; early unique matches can shorten a session.
    fn max_turns(&self) -> usize {
        self.domains
            .iter()
            .map(|d| d.chunks.len() + usize::from(!d.requests.is_empty() || d.thanks))
            .sum::<usize>()
            + usize::from(self.goodbye)
    }
}

fn plan_session(ontology: &Ontology, db: &Database, rng: &mut StreamRng) -> SessionPlan {
    let all: Vec<&str> = ontology.domains().collect();
    let n = if all.len() > 1 && rng.gen_bool(0.3) { 2 } else { 1 };
    let mut picked: Vec<&str> = all.choose_multiple(rng, n).copied().collect();
    picked.shuffle(rng);

    let domains = picked
        .into_iter()
        .map(|domain| {
            let entity = db.table(domain).choose(rng).expect("non-empty table").clone();
            let mut slots: Vec<String> = ontology
                .domain(domain)
                .expect("known")
                .informable
                .keys()
                .filter(|s| *s != NAME_SLOT)
                .cloned()
                .collect();
            slots.shuffle(rng);
            let k = rng.gen_range(1..=slots.len());
            slots.truncate(k);
            let mut chunks = Vec::new();
            let mut rest = slots.as_slice();
            while !rest.is_empty() {
                let take = if rest.len() > 1 && rng.gen_bool(0.5) { 2 } else { 1 };
                chunks.push(rest[..take].to_vec());
                rest = &rest[take..];
            }
            let n_requests = rng.gen_range(0..=2);
            let mut requests: Vec<String> = REQUESTABLE
                .choose_multiple(rng, n_requests)
                .map(|s| s.to_string())
                .collect();
            requests.sort();
            DomainPlan {
                domain: domain.to_string(),
                entity,
                chunks,
                thanks: requests.is_empty() && rng.gen_bool(0.5),
                requests,
            }
        })
        .collect();
    SessionPlan {
        domains,
        goodbye: rng.gen_bool(0.6),
    }
}

fn triple(domain: &str, act: ActType, slot: &str) -> ActTriple {
    ActTriple {
        domain: domain.to_string(),
        act,
        slot: slot.to_string(),
    }
}

struct TurnDraft {
    user: String,
    system: String,
    act: Vec<ActTriple>,
}

fn realize(
    plan: SessionPlan,
    session_id: String,
    db: &Database,
    rng: &mut StreamRng,
) -> DialogSession {
    let mut goal = BTreeMap::new();
    let mut turns = Vec::new();
    let mut belief = BeliefState::new();
    let mut tracker = DbTracker::new();

    let push = |draft: TurnDraft,
                belief: &BeliefState,
                db_result: DbResult,
                entity: Option<&Entity>,
                turns: &mut Vec<DialogTurn>| {
        turns.push(DialogTurn {
            index: turns.len(),
            user: draft.user.split_whitespace().map(str::to_string).collect(),
            belief: belief.clone(),
            db: db_result,
            act: SystemAct { triples: draft.act },
            response: delexicalize(&draft.system, entity, belief),
        });
    };

    for (pi, dp) in plan.domains.iter().enumerate() {
        let d = dp.domain.as_str();
        let entity = &dp.entity;
        let mut constraints = BTreeMap::new();
        for (ci, chunk) in dp.chunks.iter().enumerate() {
            let mut parts = Vec::new();
            for slot in chunk {
                let v = &entity[slot];
                belief.insert(d, slot, v).expect("non-empty value");
                constraints.insert(slot.clone(), v.clone());
                parts.push(slot_phrase(slot, v, rng));
            }
            let opener = if ci > 0 {
                ["i would like it", "it should be", "one"].choose(rng).expect("non-empty").to_string()
            } else if pi == 0 {
                format!("{} a {d}", ["i am looking for", "i need", "can you find me"].choose(rng).expect("non-empty"))
            } else {
                format!("i also need a {d}")
            };
            let user = format!("{opener} {} .", parts.join(" and "));

            let db_result = tracker.step(&belief, db);
            let bucket = db_result.bucket;
            let last_chunk = ci + 1 == dp.chunks.len();
            let draft = if !last_chunk && bucket != MatchBucket::One {
                let next = &dp.chunks[ci + 1][0];
                let system = [
                    format!("what {next} would you like ?"),
                    format!("do you have a {next} preference ?"),
                    format!("there are many options . which {next} do you want ?"),
                ]
                .choose(rng)
                .expect("non-empty")
                .clone();
                TurnDraft {
                    user,
                    system,
                    act: vec![triple(d, ActType::Request, next)],
                }
            } else {
                let name = &entity[NAME_SLOT];
                let (slot, value) = constraints.iter().next().expect("at least one constraint");
                let system = [
                    format!("how about {name} ? it has {slot} {value} ."),
                    format!("i recommend {name} . it has {slot} {value} ."),
                    format!("{name} matches your request , it has {slot} {value} ."),
                ]
                .choose(rng)
                .expect("non-empty")
                .clone();
                TurnDraft {
                    user,
                    system,
                    act: vec![triple(d, ActType::Recommend, NAME_SLOT), triple(d, ActType::Inform, slot)],
                }
            };
            let offered = draft.act[0].act == ActType::Recommend;
            push(draft, &belief, db_result, Some(entity), &mut turns);
            if offered {
                break;
            }
        }
        goal.insert(
            d.to_string(),
            DomainGoal {
                constraints: dp
                    .chunks
                    .iter()
                    .flatten()
                    .map(|s| (s.clone(), entity[s].clone()))
                    .collect(),
                requests: dp.requests.clone(),
            },
        );

        if !dp.requests.is_empty() {
            let asked = dp.requests.join(" and ");
            let user = [format!("can i have the {asked} ?"), format!("what is the {asked} ?")]
                .choose(rng)
                .expect("non-empty")
                .clone();
            let facts: Vec<String> = dp.requests.iter().map(|r| format!("the {r} is {}", entity[r])).collect();
            let system = [format!("sure , {} .", facts.join(" and ")), format!("{} .", facts.join(" and "))]
                .choose(rng)
                .expect("non-empty")
                .clone();
            let act = dp.requests.iter().map(|r| triple(d, ActType::Inform, r)).collect();
            let db_result = tracker.step(&belief, db);
            push(TurnDraft { user, system, act }, &belief, db_result, Some(entity), &mut turns);
        } else if dp.thanks {
            let db_result = tracker.step(&belief, db);
            push(
                TurnDraft {
                    user: "great , thanks .".into(),
                    system: "you are welcome . anything else ?".into(),
                    act: vec![triple(d, ActType::General, "none")],
                },
                &belief,
                db_result,
                Some(entity),
                &mut turns,
            );
        }
    }
    if plan.goodbye {
        let db_result = tracker.step(&belief, db);
        let d = plan.domains.last().expect("at least one domain").domain.clone();
        push(
            TurnDraft {
                user: ["that is all , goodbye .", "no thanks , bye ."].choose(rng).expect("non-empty").to_string(),
                system: ["thank you , goodbye .", "have a nice day , goodbye ."].choose(rng).expect("non-empty").to_string(),
                act: vec![triple(&d, ActType::General, "none")],
            },
            &belief,
            db_result,
            None,
            &mut turns,
        );
    }
    DialogSession {
        session_id,
        goal,
        turns,
    }
}

/// Generates a corpus; a pure function of `(config, seed)`.
pub fn generate_synthetic_corpus(
    config: &SyntheticWorldConfig,
    seed: u64,
) -> Result<(Vec<DialogSession>, Ontology, Database)> {
    let (ontology, database) = generate_world(config)?;
    let mut sessions = Vec::with_capacity(config.sessions);
    for i in 0..config.sessions {
        let mut rng = stream(seed, "session", &[i as u64]);
        let session = (0..1000).find_map(|_| {
            let plan = plan_session(&ontology, &database, &mut rng);
            if plan.max_turns() < config.min_turns {
                return None;
            }
            let s = realize(plan, format!("syn-{i:05}"), &database, &mut rng);
            (config.min_turns..=config.max_turns)
                .contains(&s.turns.len())
                .then_some(s)
        });
        let session = session.ok_or_else(|| {
            Error::Config(format!(
                "no session with {}..={} turns found; widen the turn range",
                config.min_turns, config.max_turns
            ))
        })?;
        sessions.push(session);
    }
    Ok((sessions, ontology, database))
}
