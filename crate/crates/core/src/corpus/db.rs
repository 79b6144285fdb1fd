//! Database lookup for belief states.
//!
//! A query targets one *active* domain: the domain whose constraints
//! changed most recently. Changes are measured against the previous
//! turn's belief; when several domains change in one turn the
//! alphabetically last wins, and when none changes the previous active
//! domain carries over.

use std::collections::BTreeMap;

use super::ontology::{Database, Entity};
use crate::dialog::{BeliefState, DbResult};

pub fn entity_matches(entity: &Entity, constraints: &BTreeMap<String, String>) -> bool {
    constraints
        .iter()
        .all(|(slot, value)| entity.get(slot).is_some_and(|v| v == value))
}

/// Entities of `domain` satisfying every constraint.
pub fn matching_entities<'a>(
    db: &'a Database,
    domain: &str,
    constraints: &BTreeMap<String, String>,
) -> Vec<&'a Entity> {
    db.table(domain)
        .iter()
        .filter(|e| entity_matches(e, constraints))
        .collect()
}

pub fn active_domain(
    belief: &BeliefState,
    previous: Option<&BeliefState>,
    previous_active: Option<&str>,
) -> Option<String> {
    let changed = belief
        .domains()
        .filter(|d| previous.and_then(|p| p.domain(d)) != belief.domain(d))
        .last();
    if let Some(d) = changed {
        return Some(d.to_string());
    }
    if let Some(d) = previous_active {
        return Some(d.to_string());
    }
    belief.domains().last().map(str::to_string)
}

/// Number of entities matching the belief's constraints in `active`.
/// With no active domain the constraints are vacuous over the whole
/// database.
pub fn match_count(belief: &BeliefState, active: Option<&str>, db: &Database) -> usize {
    match active {
        Some(d) => {
            let empty = BTreeMap::new();
            let constraints = belief.domain(d).unwrap_or(&empty);
            matching_entities(db, d, constraints).len()
        }
        None => db.total_entities(),
    }
}

pub fn db_query(belief: &BeliefState, active: Option<&str>, db: &Database) -> DbResult {
    DbResult::from_count(match_count(belief, active, db))
}

/// Walks a session turn by turn, carrying the state needed to resolve
/// the active domain.
#[derive(Debug, Clone, Default)]
pub struct DbTracker {
    previous: Option<BeliefState>,
    active: Option<String>,
}

impl DbTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queries for the next turn's belief and advances.
    pub fn step(&mut self, belief: &BeliefState, db: &Database) -> DbResult {
        self.active = active_domain(belief, self.previous.as_ref(), self.active.as_deref());
        self.previous = Some(belief.clone());
        db_query(belief, self.active.as_deref(), db)
    }

    pub fn active(&self) -> Option<&str> {
        self.active.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ontology::fixtures::{toy_database, toy_ontology};
    use crate::dialog::MatchBucket;
    use proptest::prelude::*;

    fn belief(pairs: &[(&str, &str, &str)]) -> BeliefState {
        let mut b = BeliefState::new();
        for (d, s, v) in pairs {
            b.insert(d, s, v).unwrap();
        }
        b
    }

    #[test]
    fn empty_belief_is_vacuous() {
        let o = toy_ontology();
        let db = toy_database(&o);
        let r = db_query(&BeliefState::new(), Some("restaurant"), &db);
        assert_eq!(r.bucket, MatchBucket::Many);
        assert!(r.booking_ok);
    }

    #[test]
    fn unique_match_and_contradiction() {
        let o = toy_ontology();
        let db = toy_database(&o);
        // Enumerating the fixture table: only golden wok is north+chinese.
        let b = belief(&[("restaurant", "area", "north"), ("restaurant", "food", "chinese")]);
        assert_eq!(db_query(&b, Some("restaurant"), &db).bucket, MatchBucket::One);
        let b = belief(&[("restaurant", "area", "south"), ("restaurant", "food", "chinese")]);
        let r = db_query(&b, Some("restaurant"), &db);
        assert_eq!(r.bucket, MatchBucket::Zero);
        assert!(!r.booking_ok);
        let b = belief(&[("restaurant", "area", "north")]);
        assert_eq!(db_query(&b, Some("restaurant"), &db).bucket, MatchBucket::Two);
    }

    #[test]
    fn active_domain_follows_latest_change() {
        let o = toy_ontology();
        let db = toy_database(&o);
        let mut t = DbTracker::new();
        let b0 = belief(&[("restaurant", "area", "north")]);
        t.step(&b0, &db);
        assert_eq!(t.active(), Some("restaurant"));
        let b1 = belief(&[("restaurant", "area", "north"), ("taxi", "dest", "station")]);
        assert_eq!(t.step(&b1, &db).bucket, MatchBucket::One);
        assert_eq!(t.active(), Some("taxi"));
        // No change: taxi stays active.
        t.step(&b1, &db);
        assert_eq!(t.active(), Some("taxi"));
        let b2 = belief(&[("restaurant", "area", "north"), ("restaurant", "food", "indian"), ("taxi", "dest", "station")]);
        t.step(&b2, &db);
        assert_eq!(t.active(), Some("restaurant"));
    }

    #[test]
    fn no_active_domain_counts_everything() {
        let o = toy_ontology();
        let db = toy_database(&o);
        let mut t = DbTracker::new();
        assert_eq!(t.step(&BeliefState::new(), &db).bucket, MatchBucket::Many);
        assert_eq!(t.active(), None);
    }

    proptest! {
        #[test]
        fn adding_a_constraint_never_increases_count(
            area in prop::sample::select(vec!["north", "south", "centre"]),
            food in prop::sample::select(vec!["italian", "indian", "chinese"]),
        ) {
            let o = toy_ontology();
            let db = toy_database(&o);
            let one = belief(&[("restaurant", "area", area)]);
            let two = belief(&[("restaurant", "area", area), ("restaurant", "food", food)]);
            let c0 = match_count(&BeliefState::new(), Some("restaurant"), &db);
            let c1 = match_count(&one, Some("restaurant"), &db);
            let c2 = match_count(&two, Some("restaurant"), &db);
            prop_assert!(c2 <= c1 && c1 <= c0);
            prop_assert_eq!(c1, match_count(&one, Some("restaurant"), &db));
        }
    }
}
