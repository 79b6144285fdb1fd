//! Word-level vocabulary with reserved structural entries.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dialog::SpanRole;
use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";
pub const MASK: &str = "[MASK]";

pub const PAD_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const MASK_ID: TokenId = 2;

/// Start/end marker strings for each role, in `SpanRole::ALL` order.
pub const MARKERS: [(&str, &str); 5] = [
    ("<sos_u>", "<eos_u>"),
    ("<sos_b>", "<eos_b>"),
    ("<sos_db>", "<eos_db>"),
    ("<sos_a>", "<eos_a>"),
    ("<sos_r>", "<eos_r>"),
];

/// Tokens that the sequence format itself produces (database buckets,
/// booking flags, act types). They are always present.
pub const STRUCTURAL: [&str; 13] = [
    "[db_0]",
    "[db_1]",
    "[db_2]",
    "[db_3]",
    "[db_many]",
    "[book_ok]",
    "[book_fail]",
    "[inform]",
    "[request]",
    "[recommend]",
    "[book]",
    "[select]",
    "[general]",
];

const RESERVED_COUNT: usize = 3 + 2 * MARKERS.len();

pub fn start_marker_id(role: SpanRole) -> TokenId {
    (3 + 2 * role.index()) as TokenId
}

pub fn end_marker_id(role: SpanRole) -> TokenId {
    (4 + 2 * role.index()) as TokenId
}

pub fn is_reserved(id: TokenId) -> bool {
    (id as usize) < RESERVED_COUNT
}

pub fn is_marker(id: TokenId) -> bool {
    (3..RESERVED_COUNT as TokenId).contains(&id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from corpus tokens. Reserved and structural
    /// entries come first; corpus tokens follow in sorted order.
    pub fn build<I, S>(corpus_tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tokens: Vec<String> = vec![PAD.into(), EOS.into(), MASK.into()];
        for (s, e) in MARKERS {
            tokens.push(s.into());
            tokens.push(e.into());
        }
        let reserved: BTreeSet<String> = tokens.iter().cloned().collect();
        let structural: BTreeSet<&str> = STRUCTURAL.iter().copied().collect();
        tokens.extend(STRUCTURAL.iter().map(|s| s.to_string()));

        let mut extra = BTreeSet::new();
        for tok in corpus_tokens {
            let tok = tok.as_ref();
            if reserved.contains(tok) {
                return Err(Error::ReservedCollision(tok.to_string()));
            }
            if !structural.contains(tok) {
                extra.insert(tok.to_string());
            }
        }
        tokens.extend(extra);
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Encodes tokens; `turn` is only used to label the error.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], turn: usize) -> Result<Vec<TokenId>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref()).ok_or_else(|| Error::UnknownToken {
                    token: t.as_ref().to_string(),
                    turn,
                })
            })
            .collect()
    }

    /// Decodes ids to token strings. Out-of-range ids decode to `<pad>`.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(PAD).to_string())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        let fresh = Vocab::build(std::iter::empty::<&str>())?;
        if tokens.len() < fresh.len() || tokens[..fresh.len()] != fresh.tokens[..] {
            return Err(Error::Checkpoint("vocabulary header does not match reserved layout".into()));
        }
        let unique: BTreeSet<&String> = tokens.iter().collect();
        if unique.len() != tokens.len() {
            return Err(Error::Checkpoint("duplicate vocabulary entries".into()));
        }
        Ok(Self::from_tokens(tokens))
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_layout_is_fixed() {
        let v = Vocab::build(["hello", "world"]).unwrap();
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(EOS), Some(EOS_ID));
        assert_eq!(v.id(MASK), Some(MASK_ID));
        for role in SpanRole::ALL {
            let (s, e) = MARKERS[role.index()];
            assert_eq!(v.id(s), Some(start_marker_id(role)));
            assert_eq!(v.id(e), Some(end_marker_id(role)));
            assert!(is_marker(start_marker_id(role)));
        }
        assert!(!is_marker(MASK_ID));
        assert!(v.id("hello").unwrap() as usize >= RESERVED_COUNT + STRUCTURAL.len());
    }

    #[test]
    fn encode_decode_identity() {
        let v = Vocab::build(["a", "b", "[value_name]"]).unwrap();
        let toks = ["b", "a", "[value_name]", "<sos_b>"];
        let ids = v.encode(&toks, 0).unwrap();
        assert_eq!(v.decode(&ids), toks);
    }

    #[test]
    fn unknown_token_names_token_and_turn() {
        let v = Vocab::build(["a"]).unwrap();
        match v.encode(&["a", "zzz"], 3) {
            Err(Error::UnknownToken { token, turn }) => {
                assert_eq!(token, "zzz");
                assert_eq!(turn, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reserved_collision_rejected() {
        assert!(matches!(
            Vocab::build(["ok", "[MASK]"]),
            Err(Error::ReservedCollision(t)) if t == "[MASK]"
        ));
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(["x", "y"]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("y"), v.id("y"));
    }
}
