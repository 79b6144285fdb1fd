mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use todlab_core::corpus::Corpus;
use todlab_core::dialog::{flatten_session, Provenance, SpanRole, TaggedSequence};
use todlab_core::lm::{LmConfig, SpanGenerator, Transformer};
use todlab_core::sampler::{
    build_mixed_sequence, decide_turn, ContextAttr, ContextSource, SamplerConfig, SamplingStrategy, TurnDecision,
};
use todlab_core::vocab::Vocab;

use common::oracles::{db_spans_consistent, enumerate, outcome_index};
use common::{small_corpus, world, Replay};

#[test]
fn decision_frequencies_match_the_enumeration() {
    let n = 100_000;
    for strategy in SamplingStrategy::ALL {
        for eps in [0.0, 0.25, 1.0] {
            let cfg = SamplerConfig {
                epsilon: eps,
                strategy,
                ..Default::default()
            };
            let mut expect = [0.0; 4];
            for (p, d) in enumerate(strategy, eps) {
                expect[outcome_index(d)] += p;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut seen = [0usize; 4];
            for _ in 0..n {
                let d = decide_turn(&mut rng, &cfg);
                seen[outcome_index((d.replace_belief, d.replace_act_resp))] += 1;
            }
            for k in 0..4 {
                let f = seen[k] as f64 / n as f64;
                assert!((f - expect[k]).abs() <= 0.01, "{strategy:?} eps {eps}: outcome {k} {f} vs {}", expect[k]);
            }
        }
    }
}

pub fn micro_model(vocab: &Vocab) -> Transformer {
    Transformer::new(LmConfig {
        vocab_size: vocab.len(),
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 32,
        dropout: 0.1,
        max_len: 512,
        init_seed: 5,
    })
    .unwrap()
}

fn cfg(strategy: SamplingStrategy, epsilon: f64) -> SamplerConfig {
    SamplerConfig {
        epsilon,
        strategy,
        max_span_len: 12,
        ..Default::default()
    }
}

fn same_structure(a: &TaggedSequence, b: &TaggedSequence) -> bool {
    a.spans().len() == b.spans().len()
        && a.spans().iter().zip(b.spans()).all(|(x, y)| x.turn == y.turn && x.role == y.role)
        && a.validate().is_ok()
}

fn setup() -> (Corpus, Vocab) {
    let c = small_corpus(60, 21);
    let v = c.build_vocab().unwrap();
    (c, v)
}

#[test]
fn zero_epsilon_is_the_ground_truth_flattening() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    let m = micro_model(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for strategy in SamplingStrategy::ALL {
        for s in c.all_sessions().take(20) {
            let mixed = build_mixed_sequence(&m, s, &w, &cfg(strategy, 0.0), &mut rng).unwrap();
            assert_eq!(mixed.seq, flatten_session(s, &vocab, None).unwrap());
        }
    }
}

#[test]
fn full_belief_sampling_marks_and_requeries() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    let m = micro_model(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for s in c.all_sessions().take(25) {
        let mixed = build_mixed_sequence(&m, s, &w, &cfg(SamplingStrategy::BeliefOnly, 1.0), &mut rng).unwrap();
        let gt = flatten_session(s, &vocab, None).unwrap();
        assert!(same_structure(&mixed.seq, &gt));
        for span in mixed.seq.spans() {
            let expect_generated = span.role == SpanRole::Belief;
            match span.role {
                SpanRole::User | SpanRole::Act | SpanRole::Response => {
                    assert_eq!(span.provenance, Provenance::GroundTruth);
                    assert_eq!(mixed.seq.content(span.turn, span.role), gt.content(span.turn, span.role));
                }
                SpanRole::Belief => assert_eq!(span.provenance == Provenance::Generated, expect_generated),
                SpanRole::DbResult => {}
            }
        }
        assert!(db_spans_consistent(&mixed.seq, &w));
    }
}

#[test]
fn current_turn_context_does_not_matter_for_belief_only() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    let m = micro_model(&vocab);
    for s in c.all_sessions().take(10) {
        let mut out = Vec::new();
        for cur in [ContextSource::Mixed, ContextSource::GroundTruth] {
            let mut config = cfg(SamplingStrategy::BeliefOnly, 1.0);
            config.context = ContextAttr {
                prev_turns: ContextSource::Mixed,
                current_turn: cur,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            out.push(build_mixed_sequence(&m, s, &w, &config, &mut rng).unwrap().seq);
        }
        assert_eq!(out[0], out[1]);
    }
}

#[test]
fn replaying_the_annotation_reproduces_the_ground_truth() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    for strategy in SamplingStrategy::ALL {
        for s in c.all_sessions().take(15) {
            let replay = Replay::new(s, &vocab);
            for prev in [ContextSource::Mixed, ContextSource::GroundTruth] {
                let mut config = cfg(strategy, 1.0);
                config.max_span_len = 64;
                config.context.prev_turns = prev;
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let mixed = build_mixed_sequence(&replay, s, &w, &config, &mut rng).unwrap();
                let gt = flatten_session(s, &vocab, None).unwrap();
                assert_eq!(mixed.seq.tokens(), gt.tokens(), "{strategy:?}");
                assert!(mixed.diagnostics.is_empty());
            }
        }
    }
}

#[test]
fn other_strategies_keep_structure_and_consistency() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    let m = micro_model(&vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for strategy in SamplingStrategy::ALL {
        for s in c.all_sessions().take(6) {
            let mixed = build_mixed_sequence(&m, s, &w, &cfg(strategy, 0.5), &mut rng).unwrap();
            let gt = flatten_session(s, &vocab, None).unwrap();
            assert!(same_structure(&mixed.seq, &gt));
            assert!(db_spans_consistent(&mixed.seq, &w));
            for (t, d) in mixed.decisions.iter().enumerate() {
                let prov = |r| mixed.seq.span(t, r).unwrap().provenance;
                assert_eq!(prov(SpanRole::Belief) == Provenance::Generated, d.replace_belief);
                assert_eq!(prov(SpanRole::Act) == Provenance::Generated, d.replace_act_resp);
                assert_eq!(prov(SpanRole::Response) == Provenance::Generated, d.replace_act_resp);
            }
        }
    }
}

#[test]
fn generated_belief_fraction_follows_epsilon() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    // Decisions do not depend on the model, so a replay stub keeps this fast.
    let eps = 0.3;
    let mut generated = 0usize;
    let mut turns = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        for s in c.all_sessions() {
            let replay = Replay::new(s, &vocab);
            let mixed = build_mixed_sequence(&replay, s, &w, &cfg(SamplingStrategy::BeliefOnly, eps), &mut rng).unwrap();
            turns += s.turns.len();
            generated += mixed.decisions.iter().filter(|d| d.replace_belief).count();
            assert!(mixed.decisions.iter().all(|d| !d.replace_act_resp));
        }
    }
    let n = turns as f64;
    let sigma = (n * eps * (1.0 - eps)).sqrt();
    assert!((generated as f64 - n * eps).abs() <= 3.0 * sigma, "{generated} of {turns}");
}

#[test]
fn truncated_generation_is_reported_not_fatal() {
    let (c, vocab) = setup();
    let w = world(&c, &vocab);
    let s = c.all_sessions().next().unwrap();
    let mut replay = Replay::new(s, &vocab);
    replay.belief_override = Some(vec![vocab.id("[MASK]").unwrap(); 40]);
    let mut config = cfg(SamplingStrategy::BeliefOnly, 1.0);
    config.max_span_len = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mixed = build_mixed_sequence(&replay, s, &w, &config, &mut rng).unwrap();
    assert_eq!(mixed.seq.content(0, SpanRole::Belief).unwrap().len(), 6);
    assert!(mixed.diagnostics.iter().any(|d| d.contains("truncated")));
    assert!(db_spans_consistent(&mixed.seq, &w));
    let _ = replay.max_len();
}

#[test]
fn decisions_default_is_no_replacement() {
    assert_eq!(
        TurnDecision::default(),
        TurnDecision {
            replace_belief: false,
            replace_act_resp: false
        }
    );
}
