use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slot that names an offered entity. Domains with this informable slot
/// require an entity offer for the inform metric.
pub const NAME_SLOT: &str = "name";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainOntology {
    pub informable: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub requestable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ontology {
    domains: BTreeMap<String, DomainOntology>,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace) && !s.starts_with('[')
}

impl Ontology {
    pub fn new(domains: BTreeMap<String, DomainOntology>) -> Result<Self> {
        let o = Self { domains };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Ontology("no domains".into()));
        }
        for (name, d) in &self.domains {
            if !is_word(name) {
                return Err(Error::Ontology(format!("bad domain name `{name}`")));
            }
            let mut seen = BTreeSet::new();
            for r in &d.requestable {
                if !is_word(r) {
                    return Err(Error::Ontology(format!("{name}: bad slot name `{r}`")));
                }
                if !seen.insert(r.as_str()) {
                    return Err(Error::Ontology(format!("{name}: duplicate requestable slot `{r}`")));
                }
            }
            let slot_words: BTreeSet<&str> = d
                .informable
                .keys()
                .map(String::as_str)
                .chain(d.requestable.iter().map(String::as_str))
                .collect();
            for (slot, values) in &d.informable {
                if !is_word(slot) {
                    return Err(Error::Ontology(format!("{name}: bad slot name `{slot}`")));
                }
                if values.is_empty() {
                    return Err(Error::Ontology(format!("{name}.{slot}: empty value set")));
                }
                for v in values {
                    let words: Vec<&str> = v.split_whitespace().collect();
                    if words.is_empty() || words.join(" ") != *v {
                        return Err(Error::Ontology(format!(
                            "{name}.{slot}: value `{v}` is not normalized"
                        )));
                    }
                    if let Some(w) = words.iter().find(|w| slot_words.contains(*w) || !is_word(w)) {
                        return Err(Error::Ontology(format!(
                            "{name}.{slot}: value `{v}` contains reserved word `{w}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn domain(&self, name: &str) -> Option<&DomainOntology> {
        self.domains.get(name)
    }

    pub fn has_domain(&self, name: &str) -> bool {
        self.domains.contains_key(name)
    }

    pub fn is_informable(&self, domain: &str, slot: &str) -> bool {
        self.domain(domain).is_some_and(|d| d.informable.contains_key(slot))
    }

    pub fn is_known_slot(&self, domain: &str, slot: &str) -> bool {
        self.domain(domain).is_some_and(|d| {
            d.informable.contains_key(slot) || d.requestable.iter().any(|r| r == slot)
        })
    }

    pub fn value_allowed(&self, domain: &str, slot: &str, value: &str) -> bool {
        self.domain(domain)
            .and_then(|d| d.informable.get(slot))
            .is_some_and(|vs| vs.iter().any(|v| v == value))
    }

    pub fn requires_offer(&self, domain: &str) -> bool {
        self.is_informable(domain, NAME_SLOT)
    }

    /// Every slot name across all domains (informable and requestable).
    pub fn all_slots(&self) -> BTreeSet<&str> {
        self.domains
            .values()
            .flat_map(|d| {
                d.informable
                    .keys()
                    .map(String::as_str)
                    .chain(d.requestable.iter().map(String::as_str))
            })
            .collect()
    }

    /// Tokens contributed to the vocabulary: domain markers, slot names,
    /// value words and one placeholder per slot.
    pub fn vocab_tokens(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        out.insert("none".to_string());
        for (name, d) in &self.domains {
            out.insert(domain_token(name));
            for (slot, values) in &d.informable {
                out.insert(slot.clone());
                out.insert(placeholder(slot));
                for v in values {
                    out.extend(v.split_whitespace().map(str::to_string));
                }
            }
            for slot in &d.requestable {
                out.insert(slot.clone());
                out.insert(placeholder(slot));
            }
        }
        out
    }
}

pub fn domain_token(domain: &str) -> String {
    format!("[{domain}]")
}

pub fn placeholder(slot: &str) -> String {
    format!("[value_{slot}]")
}

/// One database row: slot → value, including a `name` (or `id`) slot.
pub type Entity = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Database {
    tables: BTreeMap<String, Vec<Entity>>,
}

impl Database {
    pub fn new(tables: BTreeMap<String, Vec<Entity>>, ontology: &Ontology) -> Result<Self> {
        let db = Self { tables };
        db.validate(ontology)?;
        Ok(db)
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        for (domain, rows) in &self.tables {
            if !ontology.has_domain(domain) {
                return Err(Error::Ontology(format!("database domain `{domain}` not in ontology")));
            }
            for (i, e) in rows.iter().enumerate() {
                if !e.contains_key(NAME_SLOT) && !e.contains_key("id") {
                    return Err(Error::Ontology(format!("{domain}[{i}]: entity has no name/id")));
                }
                for (slot, value) in e {
                    if slot == "id" {
                        continue;
                    }
                    if !ontology.is_known_slot(domain, slot) {
                        return Err(Error::Ontology(format!("{domain}[{i}]: unknown slot `{slot}`")));
                    }
                    if ontology.is_informable(domain, slot) && !ontology.value_allowed(domain, slot, value) {
                        return Err(Error::Ontology(format!(
                            "{domain}[{i}]: value `{value}` not in value set of `{slot}`"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, domain: &str) -> &[Entity] {
        self.tables.get(domain).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tables(&self) -> &BTreeMap<String, Vec<Entity>> {
        &self.tables
    }

    pub fn total_entities(&self) -> usize {
        self.tables.values().map(Vec::len).sum()
    }
}
