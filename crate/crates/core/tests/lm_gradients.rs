//! Analytic gradients against central finite differences.

use todlab_core::lm::{stage_loss, stage_loss_and_grad, LmConfig, PairExample, Stage, Transformer};
use todlab_core::vocab::MASK_ID;

fn micro(dropout: f64) -> Transformer {
    Transformer::new(LmConfig {
        vocab_size: 16,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        d_ff: 16,
        dropout,
        max_len: 8,
        init_seed: 11,
    })
    .unwrap()
}

/// Max over all parameters of |analytic − numeric| / max(|analytic|, |numeric|, floor).
fn max_rel_error(model: &mut Transformer, batch: &[PairExample], alpha: f64, stage: Stage, seeds: &[[u64; 2]]) -> f64 {
    let mut grad = vec![0.0; model.num_params()];
    stage_loss_and_grad(model, batch, alpha, stage, seeds, &mut grad).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..model.num_params() {
        let x0 = model.params()[i];
        model.params_mut()[i] = x0 + h;
        let up = stage_loss(model, batch, alpha, stage, seeds).unwrap().total;
        model.params_mut()[i] = x0 - h;
        let down = stage_loss(model, batch, alpha, stage, seeds).unwrap().total;
        model.params_mut()[i] = x0;
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn stage1_gradient_matches_finite_differences() {
    let mut m = micro(0.1);
    let seq = [3, 7, 9, 4, 12, 5, 15, 6, 1];
    let batch = vec![PairExample::plain(&seq).unwrap()];
    let err = max_rel_error(&mut m, &batch, 0.5, Stage::Stage1, &[[101, 202]]);
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn stage2_gradient_matches_finite_differences() {
    let mut m = micro(0.1);
    let orig = [3, 7, 9, 4, 12, 5, 15, 6, 1];
    let mut a = orig;
    a[2] = MASK_ID;
    let mut b = orig;
    b[4] = MASK_ID;
    b[5] = MASK_ID;
    let batch = vec![
        PairExample::from_tokens(&a, &b, &orig).unwrap(),
        PairExample::plain(&[4, 4, 8, 10, 2, 13, 1]).unwrap(),
    ];
    let err = max_rel_error(&mut m, &batch, 0.5, Stage::Stage2, &[[1, 2], [3, 4]]);
    assert!(err < 1e-3, "max relative error {err}");
}

#[test]
fn nll_only_gradient_matches_finite_differences() {
    let mut m = micro(0.0);
    let batch = vec![PairExample::plain(&[3, 7, 9, 4, 12, 5, 15, 6]).unwrap()];
    let err = max_rel_error(&mut m, &batch, 0.0, Stage::Stage1, &[[0, 0]]);
    assert!(err < 1e-3, "max relative error {err}");
}
