use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use todlab_core::corpus::World;
use todlab_core::engine::{
    evaluate_model, train_stage1, train_stage2, write_jsonl, InferenceMode, TrainConfig, TrainOptions,
};
use todlab_core::eval::Metrics;
use todlab_core::lm::load_checkpoint;

use super::{check_vocab, load_corpus};
use crate::output::OutDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Epsilon,
    Alpha,
    MaskRate,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Alpha => "alpha",
            SweepParam::MaskRate => "mask_rate",
        }
    }

    fn apply(self, config: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Epsilon => config.sampler.epsilon = value,
            SweepParam::Alpha => config.alpha = value,
            SweepParam::MaskRate => config.rmask.rate = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Valid,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub version: u32,
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// Seeds per value; cell `s` uses `base.seed + s`.
    pub seeds: usize,
    /// Paths are relative to the spec file.
    pub base_config: PathBuf,
    pub data: PathBuf,
    /// Stage-1 checkpoint every cell starts from; without it each cell
    /// trains stage 1 first.
    #[serde(default)]
    pub init: Option<PathBuf>,
    #[serde(default)]
    pub split: EvalSplit,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec: SweepSpec = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if spec.version != 1 {
            bail!("unsupported sweep spec version {}", spec.version);
        }
        if spec.values.is_empty() {
            bail!("sweep spec has no values");
        }
        if spec.seeds == 0 {
            bail!("seeds must be positive");
        }
        let base = path.parent().unwrap_or(Path::new("."));
        spec.base_config = base.join(&spec.base_config);
        spec.data = base.join(&spec.data);
        spec.init = spec.init.map(|p| base.join(p));
        Ok(spec)
    }
}

#[derive(Debug, Serialize)]
struct Row {
    param: &'static str,
    value: f64,
    seed: u64,
    inform: Option<f64>,
    success: Option<f64>,
    bleu: Option<f64>,
    combined: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MedianRow {
    param: &'static str,
    value: f64,
    runs: usize,
    inform: Option<f64>,
    success: Option<f64>,
    bleu: Option<f64>,
    combined: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Failure {
    value: f64,
    seed: u64,
    error: String,
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn run_cell(spec: &SweepSpec, base: &TrainConfig, value: f64, s: usize, cell_dir: &Path) -> Result<Metrics> {
    let mut config = base.clone();
    spec.parameter.apply(&mut config, value);
    config.seed = base.seed + s as u64;
    config.validate()?;
    let corpus = load_corpus(&spec.data)?;
    let vocab = corpus.build_vocab()?;
    fs::create_dir_all(cell_dir)?;
    fs::write(cell_dir.join("config.toml"), config.to_toml())?;
    let opts = TrainOptions::default();
    let start = match &spec.init {
        Some(p) => {
            let (m, v) = load_checkpoint(p).with_context(|| format!("loading {}", p.display()))?;
            check_vocab(&v, &corpus)?;
            m
        }
        None => {
            let r = train_stage1(&corpus, &vocab, &config, None, &opts)?;
            r.log.write(cell_dir, "stage1")?;
            r.model
        }
    };
    let r = train_stage2(start, &corpus, &vocab, &config, &opts)?;
    r.log.write(cell_dir, "stage2")?;
    let world = World {
        ontology: &corpus.ontology,
        database: &corpus.database,
        vocab: &vocab,
    };
    let sessions = match spec.split {
        EvalSplit::Valid => &corpus.valid,
        EvalSplit::Test => &corpus.test,
    };
    let e = evaluate_model(&r.model, sessions, &world, InferenceMode::EndToEnd, config.sampler.max_span_len)?;
    fs::write(cell_dir.join("metrics.json"), serde_json::to_string_pretty(&e.metrics)?)?;
    Ok(e.metrics)
}

pub fn sweep(spec_path: &Path, out: &Path, force: bool) -> Result<()> {
    let spec = SweepSpec::load(spec_path)?;
    let base = TrainConfig::load(&spec.base_config)?;
    let files = vec![
        "results.csv".to_string(),
        "median.csv".to_string(),
        "failures.jsonl".to_string(),
        "cells".to_string(),
    ];
    let dir = OutDir::prepare(out, &files, force)?;
    let param = spec.parameter.name();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &value in &spec.values {
        for s in 0..spec.seeds {
            let seed = base.seed + s as u64;
            let cell = dir.path("cells").join(format!("{param}_{value}_seed{seed}"));
            eprintln!("{param}={value} seed={seed}");
            match run_cell(&spec, &base, value, s, &cell) {
                Ok(m) => rows.push(Row {
                    param,
                    value,
                    seed,
                    inform: Some(m.inform),
                    success: Some(m.success),
                    bleu: Some(m.bleu),
                    combined: Some(m.combined),
                }),
                Err(e) => {
                    eprintln!("  failed: {e:#}");
                    failures.push(Failure {
                        value,
                        seed,
                        error: format!("{e:#}"),
                    });
                    rows.push(Row {
                        param,
                        value,
                        seed,
                        inform: None,
                        success: None,
                        bleu: None,
                        combined: None,
                    });
                }
            }
        }
    }

    let mut w = csv::Writer::from_path(dir.path("results.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.path("median.csv"))?;
    for &value in &spec.values {
        let ok: Vec<&Row> = rows.iter().filter(|r| r.value == value && r.combined.is_some()).collect();
        let col = |f: fn(&Row) -> Option<f64>| median(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        w.serialize(MedianRow {
            param,
            value,
            runs: ok.len(),
            inform: col(|r| r.inform),
            success: col(|r| r.success),
            bleu: col(|r| r.bleu),
            combined: col(|r| r.combined),
        })?;
    }
    w.flush()?;
    write_jsonl(&dir.path("failures.jsonl"), &failures)?;
    println!(
        "{} cells, {} failed; results in {}",
        rows.len(),
        failures.len(),
        dir.root().display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
