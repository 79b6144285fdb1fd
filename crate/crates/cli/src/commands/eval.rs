use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::json;
use todlab_core::corpus::{split_by_domain, World};
use todlab_core::dialog::DialogSession;
use todlab_core::engine::{evaluate_model, write_jsonl, Evaluation, InferenceMode};
use todlab_core::lm::{load_checkpoint, Transformer};
use todlab_core::sampler::SamplerConfig;

use super::{check_vocab, load_corpus};
use crate::output::OutDir;
use crate::ModeArg;

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub mode: ModeArg,
    pub exclude_domain: Option<String>,
    pub k_shot: Option<usize>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

fn run(model: &Transformer, sessions: &[DialogSession], world: &World, mode: InferenceMode) -> Result<Option<Evaluation>> {
    if sessions.is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate_model(model, sessions, world, mode, SamplerConfig::default().max_span_len)?))
}

fn write(dir: &OutDir, stem: &str, e: &Option<Evaluation>) -> Result<()> {
    if let Some(e) = e {
        dir.write_json(&format!("{stem}.json"), &e.metrics)?;
        write_jsonl(&dir.path(&format!("{stem}_verdicts.jsonl")), &e.verdicts)?;
        write_jsonl(&dir.path(&format!("{stem}_records.jsonl")), &e.records)?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    if args.k_shot.is_some() && args.exclude_domain.is_none() {
        bail!("--k-shot requires --exclude-domain");
    }
    let (model, vocab) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let corpus = load_corpus(&args.data)?;
    check_vocab(&vocab, &corpus)?;
    let world = World {
        ontology: &corpus.ontology,
        database: &corpus.database,
        vocab: &vocab,
    };
    let (mode, tag) = match args.mode {
        ModeArg::E2e => (InferenceMode::EndToEnd, "e2e"),
        ModeArg::Policy => (InferenceMode::PolicyOpt, "policy"),
    };
    let out = match &args.out {
        Some(p) => p.clone(),
        None => args
            .checkpoint
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let stems: Vec<String> = match &args.exclude_domain {
        None => vec![format!("eval_{tag}")],
        Some(_) => vec![format!("eval_{tag}_in_domain"), format!("eval_{tag}_new_domain")],
    };
    let files: Vec<String> = stems
        .iter()
        .flat_map(|s| [format!("{s}.json"), format!("{s}_verdicts.jsonl"), format!("{s}_records.jsonl")])
        .collect();
    let dir = OutDir::prepare(&out, &files, args.force)?;

    match &args.exclude_domain {
        None => {
            let e = run(&model, &corpus.test, &world, mode)?;
            let Some(ev) = &e else { bail!("test split is empty") };
            write(&dir, &stems[0], &e)?;
            println!("{}", serde_json::to_string_pretty(&ev.metrics)?);
        }
        Some(domain) => {
            if !corpus.ontology.has_domain(domain) {
                bail!("unknown domain `{domain}`");
            }
            let split = split_by_domain(&corpus.train, &corpus.test, domain, 0)?;
            let inside = run(&model, &split.eval_in_domain, &world, mode)?;
            let new = run(&model, &split.eval_new_domain, &world, mode)?;
            write(&dir, &stems[0], &inside)?;
            write(&dir, &stems[1], &new)?;
            let report = json!({
                "excluded_domain": domain,
                "k_shot": args.k_shot.unwrap_or(0),
                "in_domain": inside.as_ref().map(|e| e.metrics),
                "new_domain": new.as_ref().map(|e| e.metrics),
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
