//! Leave-one-domain-out splits for domain-transfer experiments.

use crate::dialog::DialogSession;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainSplit {
    /// Training sessions whose goal never touches the excluded domain.
    pub train: Vec<DialogSession>,
    /// The first `k_shot` training sessions touching the excluded domain.
    pub fewshot: Vec<DialogSession>,
    /// Evaluation sessions not touching the excluded domain.
    pub eval_in_domain: Vec<DialogSession>,
    /// Evaluation sessions touching the excluded domain.
    pub eval_new_domain: Vec<DialogSession>,
    /// Remaining training sessions touching the excluded domain; unused.
    pub held_out: Vec<DialogSession>,
}

/// Partitions a (train, eval) corpus around `excluded`.
pub fn split_by_domain(
    train: &[DialogSession],
    eval: &[DialogSession],
    excluded: &str,
    k_shot: usize,
) -> Result<DomainSplit> {
    let known = train.iter().chain(eval).any(|s| s.goal_touches(excluded));
    if !known {
        return Err(Error::InsufficientSessions {
            domain: excluded.to_string(),
            available: 0,
            requested: k_shot.max(1),
        });
    }
    let (touching, train_split): (Vec<_>, Vec<_>) = train.iter().cloned().partition(|s| s.goal_touches(excluded));
    if touching.len() < k_shot {
        return Err(Error::InsufficientSessions {
            domain: excluded.to_string(),
            available: touching.len(),
            requested: k_shot,
        });
    }
    let mut touching = touching;
    let held_out = touching.split_off(k_shot);
    let (eval_new_domain, eval_in_domain) = eval.iter().cloned().partition(|s| s.goal_touches(excluded));
    Ok(DomainSplit {
        train: train_split,
        fewshot: touching,
        eval_in_domain,
        eval_new_domain,
        held_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic::{generate_synthetic_corpus, SyntheticWorldConfig};
    use std::collections::BTreeSet;

    fn corpus() -> (Vec<DialogSession>, Vec<DialogSession>) {
        let cfg = SyntheticWorldConfig {
            domains: 3,
            sessions: 120,
            ..SyntheticWorldConfig::default()
        };
        let (mut s, ..) = generate_synthetic_corpus(&cfg, 5).unwrap();
        let eval = s.split_off(90);
        (s, eval)
    }

    #[test]
    fn zero_shot_has_empty_fewshot() {
        let (tr, ev) = corpus();
        let sp = split_by_domain(&tr, &ev, "hotel", 0).unwrap();
        assert!(sp.fewshot.is_empty());
        assert!(sp.train.iter().all(|s| !s.goal_touches("hotel")));
        assert!(sp.eval_new_domain.iter().all(|s| s.goal_touches("hotel")));
        assert!(sp.eval_in_domain.iter().all(|s| !s.goal_touches("hotel")));
    }

    #[test]
    fn splits_partition_the_corpus() {
        let (tr, ev) = corpus();
        let sp = split_by_domain(&tr, &ev, "restaurant", 5).unwrap();
        assert_eq!(sp.fewshot.len(), 5);
        assert!(sp.fewshot.iter().all(|s| s.goal_touches("restaurant")));
        let ids: Vec<&str> = [&sp.train, &sp.fewshot, &sp.eval_in_domain, &sp.eval_new_domain, &sp.held_out]
            .into_iter()
            .flatten()
            .map(|s| s.session_id.as_str())
            .collect();
        let unique: BTreeSet<&str> = ids.iter().copied().collect();
        assert_eq!(unique.len(), ids.len(), "no duplicates");
        let all: BTreeSet<&str> = tr.iter().chain(&ev).map(|s| s.session_id.as_str()).collect();
        assert_eq!(unique, all);
    }

    #[test]
    fn insufficient_sessions() {
        let (tr, ev) = corpus();
        assert!(matches!(
            split_by_domain(&tr, &ev, "hotel", 10_000),
            Err(Error::InsufficientSessions { .. })
        ));
        assert!(split_by_domain(&tr, &ev, "spaceport", 0).is_err());
    }
}
