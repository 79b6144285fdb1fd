use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use todlab_core::corpus::World;
use todlab_core::engine::{evaluate_model, train_stage1, train_stage2, InferenceMode, TrainConfig, TrainOptions};
use todlab_core::lm::load_checkpoint;

use super::{check_vocab, exclude_domain, load_corpus};
use crate::output::OutDir;
use crate::StageArg;

pub struct TrainArgs {
    pub config: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub stage: StageArg,
    pub init: Option<PathBuf>,
    pub exclude_domain: Option<String>,
    pub k_shot: usize,
    pub force: bool,
    pub verbose: bool,
}

fn stage_files(n: u8) -> Vec<String> {
    ["ckpt", "_header.json", "_steps.jsonl", "_epochs.jsonl"]
        .iter()
        .map(|s| if *s == "ckpt" { format!("stage{n}.ckpt") } else { format!("stage{n}{s}") })
        .collect()
}

pub fn train(args: TrainArgs) -> Result<()> {
    let config = TrainConfig::load(&args.config)?;
    let mut corpus = load_corpus(&args.data)?;
    let vocab = corpus.build_vocab()?;
    if let Some(d) = &args.exclude_domain {
        exclude_domain(&mut corpus, d, args.k_shot)?;
    } else if args.k_shot > 0 {
        bail!("--k-shot requires --exclude-domain");
    }

    let mut files = vec!["config.toml".to_string(), "metrics.json".to_string()];
    let (run1, run2) = match args.stage {
        StageArg::One => (true, false),
        StageArg::Two => (false, true),
        StageArg::Both => (true, true),
    };
    if run1 {
        files.extend(stage_files(1));
    }
    if run2 {
        files.extend(stage_files(2));
    }

    let init = match (&args.init, args.stage) {
        (Some(p), _) => Some(p.clone()),
        (None, StageArg::Two) => {
            let p = args.out.join("stage1.ckpt");
            if !p.exists() {
                bail!(
                    "stage 2 needs a stage-1 checkpoint: pass --init or train stage 1 into {}",
                    args.out.display()
                );
            }
            Some(p)
        }
        _ => None,
    };
    let init = match init {
        Some(p) => {
            let (model, ckpt_vocab) =
                load_checkpoint(&p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            check_vocab(&ckpt_vocab, &corpus)?;
            Some(model)
        }
        None => None,
    };

    let dir = OutDir::prepare(&args.out, &files, args.force)?;
    dir.write_text("config.toml", &config.to_toml())?;
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.root().to_path_buf()),
        verbose: args.verbose,
    };

    let mut model = init;
    if run1 {
        let r = train_stage1(&corpus, &vocab, &config, model.take(), &opts)?;
        r.log.write(dir.root(), "stage1")?;
        println!(
            "stage 1: {} steps, best epoch {:?}, {:.1}s",
            r.log.steps.len(),
            r.log.best_epoch,
            r.log.wall_secs
        );
        model = Some(r.model);
    }
    if run2 {
        let start = model.take().expect("stage 2 has a start model");
        let r = train_stage2(start, &corpus, &vocab, &config, &opts)?;
        r.log.write(dir.root(), "stage2")?;
        println!(
            "stage 2: {} steps, best epoch {:?}, {:.1}s",
            r.log.steps.len(),
            r.log.best_epoch,
            r.log.wall_secs
        );
        model = Some(r.model);
    }

    let model = model.expect("at least one stage ran");
    if corpus.valid.is_empty() {
        eprintln!("warning: empty validation split; metrics.json not written");
        return Ok(());
    }
    let world = World {
        ontology: &corpus.ontology,
        database: &corpus.database,
        vocab: &vocab,
    };
    let eval = evaluate_model(
        &model,
        &corpus.valid,
        &world,
        InferenceMode::EndToEnd,
        config.sampler.max_span_len,
    )?;
    dir.write_json("metrics.json", &eval.metrics)?;
    println!("{}", serde_json::to_string(&eval.metrics)?);
    Ok(())
}
