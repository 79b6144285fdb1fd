use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use todlab_core::corpus::{Database, DbTracker, Ontology, World};
use todlab_core::dialog::{parse_belief_span, DialogSession, Goal, SpanRole, TaggedSequence};
use todlab_core::engine::run_end_to_end;
use todlab_core::eval::GeneratedSession;
use todlab_core::sampler::SamplingStrategy;

use super::Replay;

/// Second implementation of the matching rules.
pub fn brute_inform(r: &GeneratedSession, goal: &Goal, o: &Ontology, db: &Database) -> bool {
    for (domain, g) in goal {
        if g.constraints.is_empty() {
            continue;
        }
        let has_name = o.domain(domain).unwrap().informable.contains_key("name");
        if !has_name {
            continue;
        }
        let mut ok = false;
        for t in &r.turns {
            if t.active_domain.as_deref() != Some(domain.as_str()) {
                continue;
            }
            if !t.response.contains(&"[value_name]".to_string()) {
                continue;
            }
            let mut found = Vec::new();
            for e in db.table(domain) {
                let mut all = true;
                if let Some(b) = t.belief.domain(domain) {
                    for (slot, v) in b {
                        if e.get(slot) != Some(v) {
                            all = false;
                        }
                    }
                }
                if all {
                    found.push(e);
                }
            }
            let mut fits = !found.is_empty();
            for e in &found {
                for (slot, v) in &g.constraints {
                    if e.get(slot) != Some(v) {
                        fits = false;
                    }
                }
            }
            if fits {
                ok = true;
            }
        }
        if !ok {
            return false;
        }
    }
    true
}

pub fn brute_success(r: &GeneratedSession, goal: &Goal, o: &Ontology, db: &Database) -> bool {
    if !brute_inform(r, goal, o, db) {
        return false;
    }
    for (domain, g) in goal {
        for slot in &g.requests {
            let ph = format!("[value_{slot}]");
            let mut seen = false;
            for t in &r.turns {
                if t.active_domain.as_deref() == Some(domain.as_str()) && t.response.contains(&ph) {
                    seen = true;
                }
            }
            if !seen {
                return false;
            }
        }
    }
    true
}

pub fn replay_records(sessions: &[DialogSession], w: &World) -> Vec<GeneratedSession> {
    sessions
        .iter()
        .map(|s| run_end_to_end(&Replay::new(s, w.vocab), s, w, 48).unwrap())
        .collect()
}

pub fn perturb(r: &mut GeneratedSession, o: &Ontology, rng: &mut ChaCha8Rng) {
    let domains: Vec<String> = o.domains().map(str::to_string).collect();
    let placeholders = ["[value_name]", "[value_phone]", "[value_address]", "[value_postcode]", "[value_area]"];
    for t in &mut r.turns {
        if rng.gen_bool(0.3) {
            let d = domains.choose(rng).unwrap().clone();
            let dom = o.domain(&d).unwrap();
            let (slot, values) = dom.informable.iter().nth(rng.gen_range(0..dom.informable.len())).unwrap();
            t.belief.insert(&d, slot, values.choose(rng).unwrap()).unwrap();
        }
        if rng.gen_bool(0.2) {
            t.belief = Default::default();
        }
        if rng.gen_bool(0.2) {
            t.active_domain = if rng.gen_bool(0.2) { None } else { domains.choose(rng).cloned() };
        }
        if rng.gen_bool(0.3) {
            let i = rng.gen_range(0..=t.response.len());
            t.response.insert(i, placeholders.choose(rng).unwrap().to_string());
        }
        if rng.gen_bool(0.3) && !t.response.is_empty() {
            let i = rng.gen_range(0..t.response.len());
            t.response.remove(i);
        }
    }
}

/// Leaves of a strategy's decision tree as (probability, decision).
pub fn enumerate(strategy: SamplingStrategy, eps: f64) -> Vec<(f64, (bool, bool))> {
    let coin = |p: f64| [(p, true), (1.0 - p, false)];
    let mut leaves = Vec::new();
    match strategy {
        SamplingStrategy::BeliefOnly => {
            for (p, b) in coin(eps) {
                leaves.push((p, (b, false)));
            }
        }
        SamplingStrategy::ActionOnly => {
            for (p, a) in coin(eps) {
                leaves.push((p, (false, a)));
            }
        }
        SamplingStrategy::ActionFollowsBelief => {
            for (p, x) in coin(eps) {
                leaves.push((p, (x, x)));
            }
        }
        SamplingStrategy::RandomIndependent => {
            for (p, b) in coin(eps) {
                for (q, a) in coin(eps) {
                    leaves.push((p * q, (b, a)));
                }
            }
        }
        SamplingStrategy::AtMostOne => {
            for (p, b) in coin(eps) {
                if b {
                    leaves.push((p, (true, false)));
                } else {
                    for (q, a) in coin(eps) {
                        leaves.push((p * q, (false, a)));
                    }
                }
            }
        }
    }
    leaves
}

pub fn outcome_index(d: (bool, bool)) -> usize {
    (d.0 as usize) * 2 + d.1 as usize
}

/// Every DB span equals the query of the belief span before it, with the
/// active domain carried across turns.
pub fn db_spans_consistent(seq: &TaggedSequence, w: &World) -> bool {
    let mut tracker = DbTracker::new();
    (0..seq.num_turns()).all(|t| {
        let belief = parse_belief_span(&w.vocab.decode(seq.content(t, SpanRole::Belief).unwrap()), w.ontology).state;
        let db = tracker.step(&belief, w.database);
        w.vocab.decode(seq.content(t, SpanRole::DbResult).unwrap()) == db.to_tokens()
    })
}

// Expected values from clipped n-gram counts worked out per fixture:
// matches/totals for n = 1..4 and candidate/reference lengths.
pub const BLEU_FIXTURES: [(&[(&str, &str)], f64); 5] = [
    // 5/6 3/5 2/4 1/3, c = r = 6: (1/12)^(1/4)
    (&[("the cat sat on a mat", "the cat sat on the mat")], 53.7284965911771),
    // 2/6 then zeros smoothed: (2/6 * 1e-9/5 * 1e-9/4 * 1e-9/3)^(1/4)
    (&[("the the the the the the", "the cat sat on the mat")], 4.854917717073235e-06),
    // 8/9 5/7 3/5 2/3, c = 9, r = 11
    (&[("a b c d e", "a b c d e f g"), ("x y z w", "x y q w")], 56.844044849837964),
    // 12/14 8/11 5/9 3/7, c = 14, r = 19
    (
        &[
            ("[value_name] is in the [value_area] .", "[value_name] is in the [value_area] ."),
            ("sure , the phone is [value_phone] .", "the phone number is [value_phone] ."),
            ("goodbye", "have a nice day , goodbye ."),
        ],
        43.428030417713586,
    ),
    // 11/13 6/8 4/5 2/2, c = 13, r = 23
    (
        &[
            ("i have booked it", "i have booked it for you"),
            ("ok", "ok"),
            ("what area ?", "which area would you like ?"),
            ("[value_name] serves [value_food] food", "[value_name] serves [value_food] food and is [value_price]"),
            ("thanks", "you are welcome"),
        ],
        39.11357094053142,
    ),
];
