use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use todlab_core::corpus::{generate_synthetic_corpus, Corpus, SyntheticWorldConfig, SPLITS};

use crate::output::OutDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    pub version: u32,
    pub seed: u64,
    /// Train/valid/test ratios.
    pub split: [f64; 3],
    pub world: SyntheticWorldConfig,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            version: 1,
            seed: 1,
            split: [0.9, 0.05, 0.05],
            world: SyntheticWorldConfig::default(),
        }
    }
}

pub fn gen_data(config: &Path, out: &Path, force: bool) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: GenDataConfig = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if cfg.version != 1 {
        bail!("unsupported data config version {}", cfg.version);
    }
    let files: Vec<String> = SPLITS.iter().map(|s| format!("{s}.json")).collect();
    let dir = OutDir::prepare(out, &files, force)?;
    let (sessions, ontology, database) = generate_synthetic_corpus(&cfg.world, cfg.seed)?;
    let corpus = Corpus::from_sessions(ontology, database, sessions, cfg.split)?;
    corpus.save_dir(dir.root())?;
    let [tr, va, te] = corpus.counts();
    println!("train {tr}\nvalid {va}\ntest {te}");
    Ok(())
}
