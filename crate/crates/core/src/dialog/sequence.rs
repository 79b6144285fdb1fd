use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DialogSession, DialogTurn, SpanRole};
use crate::error::{Error, Result};
use crate::vocab::{end_marker_id, start_marker_id, TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Generated,
    Masked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub turn: usize,
    pub role: SpanRole,
    /// Half-open token range, markers included.
    pub start: usize,
    pub end: usize,
    pub provenance: Provenance,
}

impl Span {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    /// Range of the span body, markers excluded.
    pub fn inner(&self) -> Range<usize> {
        self.start + 1..self.end - 1
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Flattened session with a (turn, role) span index.
///
/// Spans are appended in U, B, D, A, R order per turn, so the span list
/// is always sorted and contiguous from offset 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSequence {
    tokens: Vec<TokenId>,
    spans: Vec<Span>,
}

impl TaggedSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One past the last turn index with at least one span.
    pub fn num_turns(&self) -> usize {
        self.spans.last().map_or(0, |s| s.turn + 1)
    }

    /// Role that the next appended span must have, with its turn.
    pub fn next_slot(&self) -> (usize, SpanRole) {
        match self.spans.last() {
            None => (0, SpanRole::User),
            Some(s) => match s.role.next() {
                Some(r) => (s.turn, r),
                None => (s.turn + 1, SpanRole::User),
            },
        }
    }

    /// Appends a span body wrapped in its role markers.
    pub fn push_span(&mut self, turn: usize, role: SpanRole, body: &[TokenId], provenance: Provenance) -> Result<()> {
        let expected = self.next_slot();
        if expected != (turn, role) {
            return Err(Error::InvalidDialog(format!(
                "span ({turn}, {role}) appended where ({}, {}) was expected",
                expected.0, expected.1
            )));
        }
        let start = self.tokens.len();
        self.tokens.push(start_marker_id(role));
        self.tokens.extend_from_slice(body);
        self.tokens.push(end_marker_id(role));
        self.spans.push(Span {
            turn,
            role,
            start,
            end: self.tokens.len(),
            provenance,
        });
        Ok(())
    }

    fn span_index(&self, turn: usize, role: SpanRole) -> Option<usize> {
        let first = self.spans.first()?.turn;
        let idx = turn.checked_sub(first)? * SpanRole::ALL.len() + role.index();
        self.spans
            .get(idx)
            .filter(|s| s.turn == turn && s.role == role)
            .map(|_| idx)
    }

    pub fn span(&self, turn: usize, role: SpanRole) -> Option<&Span> {
        self.span_index(turn, role).map(|i| &self.spans[i])
    }

    /// Body tokens of a span (markers excluded).
    pub fn content(&self, turn: usize, role: SpanRole) -> Option<&[TokenId]> {
        self.span(turn, role).map(|s| &self.tokens[s.inner()])
    }

    pub fn set_provenance(&mut self, turn: usize, role: SpanRole, provenance: Provenance) -> Result<()> {
        let i = self.span_index(turn, role).ok_or(Error::MissingSpan {
            turn,
            role: role.to_string(),
        })?;
        self.spans[i].provenance = provenance;
        Ok(())
    }

    /// Replaces the token at `position`. Span boundaries are unaffected.
    pub(crate) fn replace_token(&mut self, position: usize, id: TokenId) {
        self.tokens[position] = id;
    }

    /// Index of the span that contains `position`.
    pub fn span_at(&self, position: usize) -> Option<&Span> {
        let i = self.spans.partition_point(|s| s.end <= position);
        self.spans.get(i).filter(|s| s.start <= position)
    }

    /// Start offset of every turn.
    pub fn turn_starts(&self) -> Vec<usize> {
        self.spans
            .iter()
            .filter(|s| s.role == SpanRole::User)
            .map(|s| s.start)
            .collect()
    }

    /// Earliest turn-start offset `s` with `upto - s <= max_len`, so a
    /// window `tokens[s..upto]` keeps whole turns. `None` when even the
    /// last turn start does not fit.
    pub fn window_start(&self, upto: usize, max_len: usize) -> Option<usize> {
        if upto <= max_len {
            return Some(0);
        }
        self.turn_starts()
            .into_iter()
            .filter(|&s| s <= upto)
            .find(|&s| upto - s <= max_len)
    }

    /// Drops whole leading turns until the sequence fits in `max_len`.
    /// Turn numbers are preserved on the remaining spans.
    pub fn truncate_leading_turns(&self, max_len: usize) -> Result<TaggedSequence> {
        let s = self.window_start(self.len(), max_len).ok_or(Error::TooLong {
            len: self.len(),
            max: max_len,
        })?;
        if s == 0 {
            return Ok(self.clone());
        }
        let spans = self
            .spans
            .iter()
            .filter(|sp| sp.start >= s)
            .map(|sp| Span {
                start: sp.start - s,
                end: sp.end - s,
                ..sp.clone()
            })
            .collect();
        Ok(TaggedSequence {
            tokens: self.tokens[s..].to_vec(),
            spans,
        })
    }

    /// Checks that spans tile the token list in role order and that each
    /// span is bracketed by its markers.
    pub fn validate(&self) -> Result<()> {
        let mut expect_start = 0;
        let mut prev: Option<(usize, SpanRole)> = None;
        for sp in &self.spans {
            if sp.start != expect_start || sp.end < sp.start + 2 || sp.end > self.tokens.len() {
                return Err(Error::InvalidDialog(format!("span ({}, {}) has bad bounds", sp.turn, sp.role)));
            }
            let ok_order = match prev {
                None => sp.role == SpanRole::User && sp.start == 0,
                Some((t, r)) => match r.next() {
                    Some(n) => sp.turn == t && sp.role == n,
                    None => sp.turn == t + 1 && sp.role == SpanRole::User,
                },
            };
            if !ok_order {
                return Err(Error::InvalidDialog(format!("span ({}, {}) out of order", sp.turn, sp.role)));
            }
            if self.tokens[sp.start] != start_marker_id(sp.role) || self.tokens[sp.end - 1] != end_marker_id(sp.role) {
                return Err(Error::InvalidDialog(format!("span ({}, {}) lacks markers", sp.turn, sp.role)));
            }
            prev = Some((sp.turn, sp.role));
            expect_start = sp.end;
        }
        if expect_start != self.tokens.len() {
            return Err(Error::InvalidDialog("spans do not cover all tokens".into()));
        }
        Ok(())
    }
}

/// Token bodies of the five spans of a turn, in role order.
pub(crate) fn turn_bodies(turn: &DialogTurn) -> [Vec<String>; 5] {
    [
        turn.user.clone(),
        turn.belief.to_tokens(),
        turn.db.to_tokens(),
        turn.act.to_tokens(),
        turn.response.clone(),
    ]
}

/// Flattens a session into `U_0 B_0 D_0 A_0 R_0 ... U_M ... R_M`.
///
/// `overrides` replaces the default `GroundTruth` provenance for the
/// listed spans.
pub fn flatten_session(
    session: &DialogSession,
    vocab: &Vocab,
    overrides: Option<&BTreeMap<(usize, SpanRole), Provenance>>,
) -> Result<TaggedSequence> {
    let mut seq = TaggedSequence::new();
    for turn in &session.turns {
        for (role, body) in SpanRole::ALL.into_iter().zip(turn_bodies(turn)) {
            let ids = vocab.encode(&body, turn.index)?;
            let prov = overrides
                .and_then(|o| o.get(&(turn.index, role)))
                .copied()
                .unwrap_or(Provenance::GroundTruth);
            seq.push_span(turn.index, role, &ids, prov)?;
        }
    }
    Ok(seq)
}

/// Conditioning prefix for generating span `(turn, role)`: every token
/// strictly before it.
pub fn build_context(seq: &TaggedSequence, turn: usize, role: SpanRole) -> Result<&[TokenId]> {
    let span = seq.span(turn, role).ok_or(Error::MissingSpan {
        turn,
        role: role.to_string(),
    })?;
    Ok(&seq.tokens()[..span.start])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dialog::{ActTriple, ActType, BeliefState, DbResult, DomainGoal, SystemAct};
    use crate::vocab::MARKERS;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    pub(crate) fn toy_session() -> DialogSession {
        let mut b0 = BeliefState::new();
        b0.insert("restaurant", "area", "north").unwrap();
        let mut b1 = b0.clone();
        b1.insert("restaurant", "food", "indian").unwrap();
        let turn = |index, user: &str, belief: BeliefState, n, act: Vec<(ActType, &str)>, resp: &str| DialogTurn {
            index,
            user: words(user),
            belief,
            db: DbResult::from_count(n),
            act: SystemAct {
                triples: act
                    .into_iter()
                    .map(|(a, s)| ActTriple {
                        domain: "restaurant".into(),
                        act: a,
                        slot: s.into(),
                    })
                    .collect(),
            },
            response: words(resp),
        };
        DialogSession {
            session_id: "toy".into(),
            goal: [(
                "restaurant".to_string(),
                DomainGoal {
                    constraints: [("area", "north"), ("food", "indian")]
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect(),
                    requests: vec!["phone".into()],
                },
            )]
            .into_iter()
            .collect(),
            turns: vec![
                turn(0, "food in the north", b0, 2, vec![(ActType::Request, "food")], "what food ?"),
                turn(
                    1,
                    "indian please",
                    b1,
                    1,
                    vec![(ActType::Recommend, "name"), (ActType::Inform, "phone")],
                    "[value_name] is at [value_phone] .",
                ),
            ],
        }
    }

    pub(crate) fn toy_vocab() -> Vocab {
        let o = crate::corpus::ontology::fixtures::toy_ontology();
        let s = toy_session();
        let mut toks: Vec<String> = o.vocab_tokens().into_iter().collect();
        for t in &s.turns {
            toks.extend(t.user.iter().cloned());
            toks.extend(t.response.iter().cloned());
        }
        Vocab::build(toks).unwrap()
    }

    #[test]
    fn two_turn_fixture_flattens_byte_exact() {
        let v = toy_vocab();
        let seq = flatten_session(&toy_session(), &v, None).unwrap();
        // Written by hand from the serialization rules.
        let expected = "<sos_u> food in the north <eos_u> \
            <sos_b> [restaurant] area north <eos_b> \
            <sos_db> [db_2] [book_ok] <eos_db> \
            <sos_a> [restaurant] [request] food <eos_a> \
            <sos_r> what food ? <eos_r> \
            <sos_u> indian please <eos_u> \
            <sos_b> [restaurant] area north food indian <eos_b> \
            <sos_db> [db_1] [book_ok] <eos_db> \
            <sos_a> [restaurant] [recommend] name [restaurant] [inform] phone <eos_a> \
            <sos_r> [value_name] is at [value_phone] . <eos_r>";
        assert_eq!(v.decode(seq.tokens()).join(" "), expected);
        assert_eq!(seq.spans().len(), 10);
        seq.validate().unwrap();
        assert_eq!(seq.spans().iter().map(Span::len).sum::<usize>(), seq.len());
    }

    #[test]
    fn one_turn_session_has_five_ground_truth_spans() {
        let v = toy_vocab();
        let mut s = toy_session();
        s.turns.truncate(1);
        s.turns[0].user = words("food in");
        let seq = flatten_session(&s, &v, None).unwrap();
        let roles: Vec<SpanRole> = seq.spans().iter().map(|s| s.role).collect();
        assert_eq!(roles, SpanRole::ALL);
        assert!(seq.spans().iter().all(|s| s.provenance == Provenance::GroundTruth));
        assert_eq!(seq.content(0, SpanRole::User).unwrap().len(), 2);
    }

    #[test]
    fn overrides_apply() {
        let v = toy_vocab();
        let o = BTreeMap::from([((1, SpanRole::Belief), Provenance::Generated)]);
        let seq = flatten_session(&toy_session(), &v, Some(&o)).unwrap();
        assert_eq!(seq.span(1, SpanRole::Belief).unwrap().provenance, Provenance::Generated);
        assert_eq!(seq.span(0, SpanRole::Belief).unwrap().provenance, Provenance::GroundTruth);
    }

    #[test]
    fn unknown_token_reports_turn() {
        let v = toy_vocab();
        let mut s = toy_session();
        s.turns[1].user = words("klingon please");
        assert!(matches!(
            flatten_session(&s, &v, None),
            Err(Error::UnknownToken { turn: 1, .. })
        ));
    }

    #[test]
    fn context_prefixes() {
        let v = toy_vocab();
        let seq = flatten_session(&toy_session(), &v, None).unwrap();
        let c = build_context(&seq, 0, SpanRole::Belief).unwrap();
        assert_eq!(c, &seq.tokens()[seq.span(0, SpanRole::User).unwrap().range()]);
        let c = build_context(&seq, 1, SpanRole::Act).unwrap();
        let decoded = v.decode(c);
        let markers: Vec<&str> = decoded
            .iter()
            .filter(|t| MARKERS.iter().any(|(s, _)| s == t))
            .map(String::as_str)
            .collect();
        assert_eq!(
            markers,
            ["<sos_u>", "<sos_b>", "<sos_db>", "<sos_a>", "<sos_r>", "<sos_u>", "<sos_b>", "<sos_db>"]
        );
        assert!(build_context(&seq, 2, SpanRole::User).is_err());
    }

    #[test]
    fn truncation_keeps_whole_turns() {
        let v = toy_vocab();
        let seq = flatten_session(&toy_session(), &v, None).unwrap();
        let turn1 = seq.span(1, SpanRole::User).unwrap().start;
        let cut = seq.truncate_leading_turns(seq.len() - turn1).unwrap();
        cut.validate().unwrap();
        assert_eq!(cut.span(1, SpanRole::Act), cut.spans().get(3));
        assert!(cut.span(0, SpanRole::User).is_none());
        assert_eq!(cut.tokens(), &seq.tokens()[turn1..]);
        assert_eq!(cut.spans()[0].turn, 1);
        assert!(seq.truncate_leading_turns(3).is_err());
    }
}
