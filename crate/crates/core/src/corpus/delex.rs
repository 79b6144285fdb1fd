//! Response delexicalization: surface slot values become `[value_<slot>]`.

use super::ontology::{placeholder, Entity};
use crate::dialog::BeliefState;

/// Replaces every maximal token run equal to an entity or belief value
/// with its slot placeholder, scanning left to right and preferring the
/// longest value at each position.
///
/// Entity values win over belief values on ties; among entity values
/// the alphabetically first slot wins. Placeholders never match a value,
/// so the function is idempotent.
pub fn delexicalize(raw: &str, entity: Option<&Entity>, belief: &BeliefState) -> Vec<String> {
    let mut candidates: Vec<(Vec<&str>, &str)> = Vec::new();
    if let Some(e) = entity {
        for (slot, value) in e {
            if slot == "id" {
                continue;
            }
            candidates.push((value.split_whitespace().collect(), slot));
        }
    }
    for slots in belief.constraints().values() {
        for (slot, value) in slots {
            candidates.push((value.split_whitespace().collect(), slot));
        }
    }
    candidates.retain(|(v, _)| !v.is_empty());
    // Stable sort keeps entity-before-belief order among equal lengths.
    candidates.sort_by(|a, b| b.0.len().cmp(&a.0.len()));

    let words: Vec<&str> = raw.split_whitespace().collect();
    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let hit = candidates
            .iter()
            .find(|(v, _)| words[i..].starts_with(v));
        match hit {
            Some((v, slot)) => {
                out.push(placeholder(slot));
                i += v.len();
            }
            None => {
                out.push(words[i].to_string());
                i += 1;
            }
        }
    }
    out
}
