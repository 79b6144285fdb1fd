use std::collections::HashMap;

use crate::error::{Error, Result};

/// Numerator used in place of a zero n-gram match count.
pub const BLEU_SMOOTHING: f64 = 1e-9;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 on a 0–100 scale with one reference per candidate.
///
/// Clipped n-gram matches and candidate n-gram totals are summed over the
/// corpus before dividing. A zero match count becomes
/// [`BLEU_SMOOTHING`]; an order with no candidate n-grams at all gets
/// precision `BLEU_SMOOTHING`.
pub fn corpus_bleu<S: AsRef<str>, T: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    if candidates.len() != references.len() {
        return Err(Error::Shape(format!(
            "{} candidates for {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=4 {
            let cc = ngram_counts(c, n);
            let rc = ngram_counts(r, n);
            totals[n - 1] += cc.values().sum::<usize>();
            matches[n - 1] += cc
                .iter()
                .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if totals[n] == 0 {
            BLEU_SMOOTHING
        } else if matches[n] == 0 {
            BLEU_SMOOTHING / totals[n] as f64
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(100.0 * bp * (log_sum / 4.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_is_100() {
        let c = vec![toks("the cat sat on the mat"), toks("a b c d e")];
        assert!((corpus_bleu(&c, &c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_is_near_zero() {
        let c = vec![toks("a b c d e")];
        let r = vec![toks("v w x y z")];
        assert!(corpus_bleu(&c, &r).unwrap() < 1e-6);
    }

    #[test]
    fn errors() {
        let e: Vec<Vec<String>> = vec![];
        assert!(corpus_bleu(&e, &e).is_err());
        assert!(corpus_bleu(&[toks("a")], &[toks("a"), toks("b")]).is_err());
    }
}
