#![allow(dead_code)]

use todlab_core::corpus::{generate_synthetic_corpus, Corpus, SyntheticWorldConfig, World};
use todlab_core::dialog::{flatten_session, DialogSession, SpanRole};
use todlab_core::lm::SpanGenerator;
use todlab_core::vocab::{end_marker_id, start_marker_id, TokenId, Vocab};
use todlab_core::Result;

pub fn small_corpus(sessions: usize, seed: u64) -> Corpus {
    let cfg = SyntheticWorldConfig {
        sessions,
        ..Default::default()
    };
    let (s, o, db) = generate_synthetic_corpus(&cfg, seed).unwrap();
    Corpus::from_sessions(o, db, s, [0.8, 0.1, 0.1]).unwrap()
}

pub fn world<'a>(c: &'a Corpus, vocab: &'a Vocab) -> World<'a> {
    World {
        ontology: &c.ontology,
        database: &c.database,
        vocab,
    }
}

/// Stub generator that answers every span of one session with its
/// annotation. Belief spans can be replaced by a fixed body.
pub struct Replay {
    spans: Vec<[Vec<TokenId>; 5]>,
    pub belief_override: Option<Vec<TokenId>>,
    pub max_len: usize,
}

impl Replay {
    pub fn new(session: &DialogSession, vocab: &Vocab) -> Self {
        let seq = flatten_session(session, vocab, None).unwrap();
        let spans = (0..session.turns.len())
            .map(|t| SpanRole::ALL.map(|r| seq.content(t, r).unwrap().to_vec()))
            .collect();
        Self {
            spans,
            belief_override: None,
            max_len: 4096,
        }
    }
}

impl SpanGenerator for Replay {
    fn max_len(&self) -> usize {
        self.max_len
    }

    fn generate(&self, context: &[TokenId], stop: TokenId, max_new: usize) -> Result<Vec<TokenId>> {
        let u0 = start_marker_id(SpanRole::User);
        let turn = context.iter().filter(|&&t| t == u0).count() - 1;
        let role = SpanRole::ALL
            .into_iter()
            .find(|&r| end_marker_id(r) == stop)
            .expect("stop is an end marker");
        let mut out = match (&self.belief_override, role) {
            (Some(b), SpanRole::Belief) => b.clone(),
            _ => self.spans[turn][role.index()].clone(),
        };
        out.push(stop);
        out.truncate(max_new);
        Ok(out)
    }
}
pub mod oracles;
