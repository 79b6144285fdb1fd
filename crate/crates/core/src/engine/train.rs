use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::infer::{evaluate_model, InferenceMode};
use super::{EpochRecord, StepRecord, TrainConfig, TrainHeader, TrainLog};
use crate::corpus::{Corpus, World};
use crate::dialog::{flatten_session, DialogSession};
use crate::error::{Error, Result};
use crate::eval::Metrics;
use crate::lm::{save_checkpoint, stage_loss_and_grad, AdamW, PairExample, Stage, Transformer};
use crate::rmask::{apply_mask, draw_mask_pair};
use crate::rng::{derive_seed, stream};
use crate::sampler::build_mixed_sequence;
use crate::vocab::Vocab;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where to write `stage<N>.ckpt` and epoch checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct StageResult {
    /// Best validation model, or the last one without validation.
    pub model: Transformer,
    pub log: TrainLog,
    pub best: Option<Metrics>,
}

fn stage_number(stage: Stage) -> u8 {
    match stage {
        Stage::Stage1 => 1,
        Stage::Stage2 => 2,
    }
}

fn session_key(s: &DialogSession) -> u64 {
    derive_seed(0, &s.session_id, &[])
}

/// Ground-truth example for one session, oldest turns dropped to fit.
fn plain_example(session: &DialogSession, vocab: &Vocab, max_len: usize) -> Result<PairExample> {
    let seq = flatten_session(session, vocab, None)?.truncate_leading_turns(max_len)?;
    PairExample::plain(seq.tokens())
}

fn mixed_example(
    model: &Transformer,
    session: &DialogSession,
    world: &World,
    config: &TrainConfig,
    epoch: usize,
) -> Result<PairExample> {
    let key = session_key(session);
    let mut srng = stream(
        derive_seed(config.seed, "sampler", &[config.sampler.seed]),
        "session",
        &[epoch as u64, key],
    );
    let mixed = build_mixed_sequence(model, session, world, &config.sampler, &mut srng)?;
    let seq = mixed.seq.truncate_leading_turns(model.config().max_len)?;
    let mut mrng = stream(
        derive_seed(config.seed, "rmask", &[config.rmask.seed]),
        "session",
        &[epoch as u64, key],
    );
    let (pa, pb) = draw_mask_pair(&seq, &config.rmask, &mut mrng);
    let a = apply_mask(&seq, &pa)?;
    let b = apply_mask(&seq, &pb)?;
    PairExample::from_sequences(&a.seq, &b.seq, seq.tokens())
}

fn check_inputs(model: &Transformer, corpus: &Corpus, vocab: &Vocab, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if model.config().vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model vocabulary {} differs from corpus vocabulary {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

/// Trains on ground-truth sessions with the dropout-consistency term.
/// Starts from `init` when given, otherwise from a fresh model built
/// from `config.model`.
pub fn train_stage1(
    corpus: &Corpus,
    vocab: &Vocab,
    config: &TrainConfig,
    init: Option<Transformer>,
    opts: &TrainOptions,
) -> Result<StageResult> {
    let model = match init {
        Some(m) => m,
        None => Transformer::new(config.model.lm_config(vocab.len()))?,
    };
    check_inputs(&model, corpus, vocab, config)?;
    let max_len = model.config().max_len;
    let examples = corpus
        .train
        .iter()
        .map(|s| plain_example(s, vocab, max_len))
        .collect::<Result<Vec<_>>>()?;
    run_stage(model, corpus, vocab, config, Stage::Stage1, config.stage1_epochs, opts, |_, i, _| {
        Ok(examples[i].clone())
    })
}

/// Continues training on mixed sequences with masked belief pairs.
/// Generation inside sampling uses the live parameters.
pub fn train_stage2(
    model: Transformer,
    corpus: &Corpus,
    vocab: &Vocab,
    config: &TrainConfig,
    opts: &TrainOptions,
) -> Result<StageResult> {
    check_inputs(&model, corpus, vocab, config)?;
    let world = World {
        ontology: &corpus.ontology,
        database: &corpus.database,
        vocab,
    };
    run_stage(model, corpus, vocab, config, Stage::Stage2, config.stage2_epochs, opts, |m, i, epoch| {
        mixed_example(m, &corpus.train[i], &world, config, epoch)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stage<F>(
    mut model: Transformer,
    corpus: &Corpus,
    vocab: &Vocab,
    config: &TrainConfig,
    stage: Stage,
    epochs: usize,
    opts: &TrainOptions,
    mut example: F,
) -> Result<StageResult>
where
    F: FnMut(&Transformer, usize, usize) -> Result<PairExample>,
{
    let started = Instant::now();
    let world = World {
        ontology: &corpus.ontology,
        database: &corpus.database,
        vocab,
    };
    let valid: &[DialogSession] = match config.max_valid_sessions {
        0 => &corpus.valid,
        n => &corpus.valid[..n.min(corpus.valid.len())],
    };
    let mut log = TrainLog {
        header: TrainHeader {
            stage,
            seed: config.seed,
            num_params: model.num_params(),
            vocab_size: vocab.len(),
            train_sessions: corpus.train.len(),
            valid_sessions: valid.len(),
            config: config.clone(),
        },
        steps: Vec::new(),
        epochs: Vec::new(),
        best_epoch: None,
        wall_secs: 0.0,
    };
    let n = stage_number(stage);
    let mut opt = AdamW::new(config.optimizer.clone(), model.num_params());
    let mut grad = vec![0.0; model.num_params()];
    let mut best: Option<(Metrics, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut step = 0;

    for epoch in 0..epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..corpus.train.len()).collect();
        order.shuffle(&mut stream(config.seed, "order", &[epoch as u64]));
        let mut epoch_total = 0.0;
        let mut epoch_steps = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = chunk
                .iter()
                .map(|&i| example(&model, i, epoch))
                .collect::<Result<Vec<_>>>()?;
            let seeds: Vec<[u64; 2]> = (0..batch.len() as u64)
                .map(|j| {
                    let c = [epoch as u64, bi as u64, j];
                    [
                        derive_seed(config.seed, "dropout-a", &c),
                        derive_seed(config.seed, "dropout-b", &c),
                    ]
                })
                .collect();
            grad.fill(0.0);
            let loss = stage_loss_and_grad(&model, &batch, config.alpha, stage, &seeds, &mut grad)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    step,
                    nll: loss.nll,
                    kl: loss.kl,
                });
            }
            opt.step(model.params_mut(), &grad, config.learning_rate);
            log.steps.push(StepRecord {
                step,
                epoch,
                stage,
                nll: loss.nll,
                kl: loss.kl,
                alpha: loss.alpha,
                total: loss.total,
            });
            epoch_total += loss.total;
            epoch_steps += 1;
            step += 1;
        }

        let validate = config.validate_every > 0
            && !valid.is_empty()
            && ((epoch + 1) % config.validate_every == 0 || epoch + 1 == epochs);
        let metrics = if validate {
            let m = evaluate_model(&model, valid, &world, InferenceMode::EndToEnd, config.sampler.max_span_len)?.metrics;
            if best.as_ref().is_none_or(|(b, _)| m.combined > b.combined) {
                best = Some((m, model.params().to_vec()));
                log.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
            }
            Some(m)
        } else {
            None
        };
        let rec = EpochRecord {
            epoch,
            stage,
            mean_total: epoch_total / epoch_steps.max(1) as f64,
            valid: metrics,
            wall_secs: t0.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            match &rec.valid {
                Some(m) => eprintln!(
                    "stage {n} epoch {epoch}: loss {:.4} | inform {:.1} success {:.1} bleu {:.2} combined {:.2} ({:.1}s)",
                    rec.mean_total, m.inform, m.success, m.bleu, m.combined, rec.wall_secs
                ),
                None => eprintln!("stage {n} epoch {epoch}: loss {:.4} ({:.1}s)", rec.mean_total, rec.wall_secs),
            }
        }
        log.epochs.push(rec);
        if let Some(dir) = &opts.checkpoint_dir {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                save_checkpoint(dir.join(format!("stage{n}_epoch{epoch:03}.ckpt")), &model, vocab)?;
            }
        }
        if config.patience > 0 && since_best >= config.patience {
            break;
        }
    }

    let best_metrics = best.as_ref().map(|(m, _)| *m);
    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    if let Some(dir) = &opts.checkpoint_dir {
        save_checkpoint(dir.join(format!("stage{n}.ckpt")), &model, vocab)?;
    }
    log.wall_secs = started.elapsed().as_secs_f64();
    Ok(StageResult {
        model,
        log,
        best: best_metrics,
    })
}
