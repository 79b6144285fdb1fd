//! Corpus ingestion, database, delexicalization, splits and the
//! synthetic mini-world.

pub mod db;
pub mod delex;
pub mod ontology;
pub mod schema;
pub mod split;
pub mod synthetic;

use std::path::Path;

pub use db::{db_query, DbTracker};
pub use delex::delexicalize;
pub use ontology::{Database, DomainOntology, Entity, Ontology};
pub use schema::{load_corpus, save_corpus, CorpusFile};
pub use split::{split_by_domain, DomainSplit};
pub use synthetic::{generate_synthetic_corpus, SyntheticWorldConfig};

use crate::dialog::DialogSession;
use crate::error::{Error, Result};
use crate::vocab::Vocab;

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

/// Everything needed to encode, query and parse generated spans.
#[derive(Debug, Clone, Copy)]
pub struct World<'a> {
    pub ontology: &'a Ontology,
    pub database: &'a Database,
    pub vocab: &'a Vocab,
}

/// A train/valid/test corpus sharing one ontology and database.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub ontology: Ontology,
    pub database: Database,
    pub train: Vec<DialogSession>,
    pub valid: Vec<DialogSession>,
    pub test: Vec<DialogSession>,
}

impl Corpus {
    /// Loads `train.json`, `valid.json` and `test.json` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files = Vec::with_capacity(3);
        for name in SPLITS {
            files.push(load_corpus(dir.join(format!("{name}.json")))?);
        }
        let [train, valid, test]: [CorpusFile; 3] = files.try_into().expect("three splits");
        if valid.ontology != train.ontology || test.ontology != train.ontology {
            return Err(Error::Ontology("splits disagree on the ontology".into()));
        }
        if valid.database != train.database || test.database != train.database {
            return Err(Error::Ontology("splits disagree on the database".into()));
        }
        Ok(Self {
            ontology: train.ontology,
            database: train.database,
            train: train.sessions,
            valid: valid.sessions,
            test: test.sessions,
        })
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (name, sessions) in SPLITS.into_iter().zip([&self.train, &self.valid, &self.test]) {
            save_corpus(dir.join(format!("{name}.json")), &self.ontology, &self.database, sessions)?;
        }
        Ok(())
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }

    pub fn all_sessions(&self) -> impl Iterator<Item = &DialogSession> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// Vocabulary covering the ontology and every session.
    pub fn build_vocab(&self) -> Result<Vocab> {
        build_vocab(&self.ontology, self.all_sessions())
    }

    /// Splits a session list by ratio. Counts are rounded for train and
    /// valid; test takes the remainder.
    pub fn from_sessions(
        ontology: Ontology,
        database: Database,
        mut sessions: Vec<DialogSession>,
        ratios: [f64; 3],
    ) -> Result<Self> {
        let total: f64 = ratios.iter().sum();
        if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || total <= 0.0 {
            return Err(Error::Config("split ratios must be non-negative and sum > 0".into()));
        }
        let n = sessions.len();
        let n_train = ((ratios[0] / total) * n as f64).round() as usize;
        let n_valid = (((ratios[1] / total) * n as f64).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let rest = sessions.split_off(n_train);
        let mut rest = rest;
        let test = rest.split_off(n_valid);
        Ok(Self {
            ontology,
            database,
            train: sessions,
            valid: rest,
            test,
        })
    }
}

pub fn build_vocab<'a>(ontology: &Ontology, sessions: impl IntoIterator<Item = &'a DialogSession>) -> Result<Vocab> {
    let mut toks = ontology.vocab_tokens();
    for s in sessions {
        for t in &s.turns {
            toks.extend(t.user.iter().cloned());
            toks.extend(t.response.iter().cloned());
            toks.extend(t.act.to_tokens());
            toks.extend(t.belief.to_tokens());
        }
    }
    Vocab::build(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_split_is_exact_on_round_counts() {
        let cfg = SyntheticWorldConfig {
            sessions: 100,
            ..SyntheticWorldConfig::default()
        };
        let (s, o, d) = generate_synthetic_corpus(&cfg, 1).unwrap();
        let c = Corpus::from_sessions(o, d, s, [0.9, 0.05, 0.05]).unwrap();
        assert_eq!(c.counts(), [90, 5, 5]);
    }

    #[test]
    fn dir_round_trip() {
        let cfg = SyntheticWorldConfig {
            sessions: 20,
            ..SyntheticWorldConfig::default()
        };
        let (s, o, d) = generate_synthetic_corpus(&cfg, 2).unwrap();
        let c = Corpus::from_sessions(o, d, s, [0.8, 0.1, 0.1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.save_dir(dir.path()).unwrap();
        let back = Corpus::load_dir(dir.path()).unwrap();
        assert_eq!(back, c);
        let v = back.build_vocab().unwrap();
        for s in back.all_sessions() {
            crate::dialog::flatten_session(s, &v, None).unwrap();
        }
    }
}
