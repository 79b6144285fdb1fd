//! Belief states and their canonical token form.
//!
//! A belief span serializes as a run of domain blocks in alphabetical
//! order. Each block is the domain token (`[restaurant]`) followed by
//! `slot value...` pairs in alphabetical slot order; values may span
//! several words. Slot names never occur inside values (enforced by the
//! ontology), which makes the token form unambiguous.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ontology::{domain_token, Ontology};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefState {
    constraints: BTreeMap<String, BTreeMap<String, String>>,
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from a nested map, checking every name and value
    /// against the ontology.
    pub fn from_map(
        constraints: BTreeMap<String, BTreeMap<String, String>>,
        ontology: &Ontology,
    ) -> Result<Self> {
        let mut b = Self::new();
        for (domain, slots) in constraints {
            for (slot, value) in slots {
                b.insert_checked(&domain, &slot, &value, ontology)?;
            }
        }
        Ok(b)
    }

    pub fn insert(&mut self, domain: &str, slot: &str, value: &str) -> Result<()> {
        let value = value.split_whitespace().collect::<Vec<_>>().join(" ");
        if value.is_empty() {
            return Err(Error::InvalidDialog(format!("empty value for {domain}.{slot}")));
        }
        self.constraints
            .entry(domain.to_string())
            .or_default()
            .insert(slot.to_string(), value);
        Ok(())
    }

    pub fn insert_checked(&mut self, domain: &str, slot: &str, value: &str, ontology: &Ontology) -> Result<()> {
        if !ontology.has_domain(domain) {
            return Err(Error::Ontology(format!("unknown domain `{domain}`")));
        }
        if !ontology.is_informable(domain, slot) {
            return Err(Error::Ontology(format!("unknown slot `{domain}.{slot}`")));
        }
        if !ontology.value_allowed(domain, slot, value) {
            return Err(Error::Ontology(format!("value `{value}` not allowed for `{domain}.{slot}`")));
        }
        self.insert(domain, slot, value)
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&str> {
        self.constraints.get(domain)?.get(slot).map(String::as_str)
    }

    pub fn domain(&self, domain: &str) -> Option<&BTreeMap<String, String>> {
        self.constraints.get(domain)
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.constraints.keys().map(String::as_str)
    }

    pub fn constraints(&self) -> &BTreeMap<String, BTreeMap<String, String>> {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Canonical token form (no role markers).
    pub fn to_tokens(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (domain, slots) in &self.constraints {
            if slots.is_empty() {
                continue;
            }
            out.push(domain_token(domain));
            for (slot, value) in slots {
                out.push(slot.clone());
                out.extend(value.split_whitespace().map(str::to_string));
            }
        }
        out
    }
}

/// Result of a best-effort belief parse.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BeliefParse {
    pub state: BeliefState,
    /// Human-readable descriptions of fragments that were dropped.
    pub dropped: Vec<String>,
}

fn as_domain(tok: &str) -> Option<&str> {
    tok.strip_prefix('[')?.strip_suffix(']')
}

/// Parses a belief span (without markers) into a canonical state.
///
/// Total: never fails. The span is cut into blocks at domain tokens;
/// tokens before the first block, blocks for unknown or repeated
/// domains, and everything in a block after its first malformed pair
/// are dropped. A pair is malformed when the slot is not informable,
/// the slot repeats, or no non-empty prefix of the value is in the
/// slot's value set. A value cut to its longest allowed prefix is kept
/// and ends the block.
pub fn parse_belief_span<S: AsRef<str>>(tokens: &[S], ontology: &Ontology) -> BeliefParse {
    let mut parse = BeliefParse::default();
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();

    let mut seen = std::collections::BTreeSet::new();
    let mut i = 0;
    let lead = toks.iter().take_while(|t| as_domain(t).is_none()).count();
    if lead > 0 {
        parse.dropped.push(format!("leading tokens: {}", toks[..lead].join(" ")));
        i = lead;
    }

    while i < toks.len() {
        let domain = as_domain(toks[i]).unwrap_or_default();
        let block_end = toks[i + 1..]
            .iter()
            .position(|t| as_domain(t).is_some())
            .map_or(toks.len(), |p| i + 1 + p);
        let body = &toks[i + 1..block_end];
        i = block_end;

        let known = ontology.has_domain(domain)
            && ontology.domain(domain).is_some_and(|d| !d.informable.is_empty());
        if !known {
            parse.dropped.push(format!("unknown domain block [{domain}]"));
            continue;
        }
        if !seen.insert(domain) {
            parse.dropped.push(format!("repeated domain block [{domain}]"));
            continue;
        }
        let slots = parse_block(domain, body, ontology, &mut parse.dropped);
        if !slots.is_empty() {
            parse.state.constraints.insert(domain.to_string(), slots);
        }
    }
    parse
}

fn parse_block(
    domain: &str,
    body: &[&str],
    ontology: &Ontology,
    dropped: &mut Vec<String>,
) -> BTreeMap<String, String> {
    let dom = ontology.domain(domain).expect("domain checked by caller");
    let is_slot = |t: &str| dom.informable.contains_key(t);
    let mut slots = BTreeMap::new();
    let mut j = 0;
    while j < body.len() {
        let slot = body[j];
        let value_len = body[j + 1..].iter().take_while(|t| !is_slot(t)).count();
        if !is_slot(slot) || slots.contains_key(slot) {
            dropped.push(format!("[{domain}] from `{}`", body[j..].join(" ")));
            break;
        }
        // Longest allowed value prefix; a shortened value ends the block.
        let run = &body[j + 1..j + 1 + value_len];
        let Some(len) = (1..=value_len)
            .rev()
            .find(|&m| ontology.value_allowed(domain, slot, &run[..m].join(" ")))
        else {
            dropped.push(format!("[{domain}] from `{}`", body[j..].join(" ")));
            break;
        };
        slots.insert(slot.to_string(), run[..len].join(" "));
        j += 1 + len;
        if len < value_len {
            dropped.push(format!("[{domain}] from `{}`", body[j..].join(" ")));
            break;
        }
    }
    slots
}
