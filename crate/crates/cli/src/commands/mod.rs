mod eval;
mod gen_data;
mod report;
mod sweep;
mod train;

pub use eval::{eval, EvalArgs};
pub use gen_data::gen_data;
pub use report::report;
pub use sweep::sweep;
pub use train::{train, TrainArgs};

use std::path::Path;

use anyhow::{bail, Context, Result};
use todlab_core::corpus::{split_by_domain, Corpus};
use todlab_core::vocab::Vocab;

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    Corpus::load_dir(dir).with_context(|| format!("loading corpus from {}", dir.display()))
}

/// Restricts training to sessions not touching `domain` plus `k_shot`
/// that do, and validation to sessions not touching it.
pub fn exclude_domain(corpus: &mut Corpus, domain: &str, k_shot: usize) -> Result<()> {
    if !corpus.ontology.has_domain(domain) {
        bail!("unknown domain `{domain}`");
    }
    let split = split_by_domain(&corpus.train, &corpus.valid, domain, k_shot)?;
    corpus.train = split.train;
    corpus.train.extend(split.fewshot);
    corpus.valid = split.eval_in_domain;
    Ok(())
}

/// Checks that a checkpoint's vocabulary matches the corpus.
pub fn check_vocab(checkpoint: &Vocab, corpus: &Corpus) -> Result<()> {
    let built = corpus.build_vocab()?;
    if &built != checkpoint {
        bail!(
            "checkpoint vocabulary ({} tokens) does not match the corpus vocabulary ({} tokens)",
            checkpoint.len(),
            built.len()
        );
    }
    Ok(())
}
