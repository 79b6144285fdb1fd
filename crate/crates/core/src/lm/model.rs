//! Pre-norm transformer in f64 with hand-written backward pass.
//!
//! All parameters live in one flat buffer; gradients use the same layout,
//! which keeps the optimizer and checkpoint code layout-agnostic.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{softmax_in_place, LMDistribution, LmConfig, SpanGenerator};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::vocab::TokenId;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug, Clone, Copy)]
struct Slot {
    off: usize,
    rows: usize,
    cols: usize,
}

impl Slot {
    fn len(self) -> usize {
        self.rows * self.cols
    }

    fn range(self) -> std::ops::Range<usize> {
        self.off..self.off + self.len()
    }

    fn mat(self, p: &[f64]) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.range()]).expect("slot shape")
    }

    fn mat_mut(self, p: &mut [f64]) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.range()]).expect("slot shape")
    }

    fn vec(self, p: &[f64]) -> ArrayView1<'_, f64> {
        ArrayView1::from(&p[self.range()])
    }

    fn add(self, p: &mut [f64], v: impl IntoIterator<Item = f64>) {
        for (dst, x) in p[self.range()].iter_mut().zip(v) {
            *dst += x;
        }
    }
}

#[derive(Debug, Clone)]
struct BlockLayout {
    ln1_g: Slot,
    ln1_b: Slot,
    w_qkv: Slot,
    b_qkv: Slot,
    w_o: Slot,
    b_o: Slot,
    ln2_g: Slot,
    ln2_b: Slot,
    w_fc: Slot,
    b_fc: Slot,
    w_proj: Slot,
    b_proj: Slot,
}

#[derive(Debug, Clone)]
struct Layout {
    tok_emb: Slot,
    pos_emb: Slot,
    blocks: Vec<BlockLayout>,
    lnf_g: Slot,
    lnf_b: Slot,
    total: usize,
}

impl Layout {
    fn new(c: &LmConfig) -> Self {
        let mut off = 0;
        let mut slot = |rows: usize, cols: usize| {
            let s = Slot { off, rows, cols };
            off += rows * cols;
            s
        };
        let d = c.d_model;
        let tok_emb = slot(c.vocab_size, d);
        let pos_emb = slot(c.max_len, d);
        let blocks = (0..c.n_layers)
            .map(|_| BlockLayout {
                ln1_g: slot(1, d),
                ln1_b: slot(1, d),
                w_qkv: slot(d, 3 * d),
                b_qkv: slot(1, 3 * d),
                w_o: slot(d, d),
                b_o: slot(1, d),
                ln2_g: slot(1, d),
                ln2_b: slot(1, d),
                w_fc: slot(d, c.d_ff),
                b_fc: slot(1, c.d_ff),
                w_proj: slot(c.d_ff, d),
                b_proj: slot(1, d),
            })
            .collect();
        let lnf_g = slot(1, d);
        let lnf_b = slot(1, d);
        Layout {
            tok_emb,
            pos_emb,
            blocks,
            lnf_g,
            lnf_b,
            total: off,
        }
    }
}

/// The language model. The output projection is tied to the token
/// embedding.
#[derive(Debug, Clone)]
pub struct Transformer {
    config: LmConfig,
    layout: Layout,
    params: Vec<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct BlockCache {
    ln1: LnCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    att: Array2<f64>,
    mask_a: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    mask_m: Option<Array2<f64>>,
}

/// Activations kept from a training forward pass.
pub(crate) struct Cache {
    ids: Vec<TokenId>,
    mask_emb: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    hf: Array2<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (t, d) = x.dim();
    let mut xhat = Array2::zeros((t, d));
    let mut rstd = Array1::zeros(t);
    for i in 0..t {
        let row = x.row(i);
        let mu = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mu) * r));
    }
    let y = &xhat * &g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_vec(x: &Array1<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let d = x.len() as f64;
    let mu = x.sum() / d;
    let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
    let r = 1.0 / (var + LN_EPS).sqrt();
    x.mapv(|v| (v - mu) * r) * g + b
}

/// Returns dx; accumulates dg and db into `grad`.
fn layer_norm_back(
    dy: &Array2<f64>,
    c: &LnCache,
    g: ArrayView1<f64>,
    g_slot: Slot,
    b_slot: Slot,
    grad: &mut [f64],
) -> Array2<f64> {
    g_slot.add(grad, (dy * &c.xhat).sum_axis(Axis(0)));
    b_slot.add(grad, dy.sum_axis(Axis(0)));
    let dxhat = dy * &g;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = c.xhat.row(i);
        let m1 = dh.sum() / d;
        let m2 = dh.dot(&xh) / d;
        let r = c.rstd[i];
        dx.row_mut(i)
            .assign(&ndarray::Zip::from(&dh).and(&xh).map_collect(|&a, &x| r * (a - m1 - x * m2)));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn dropout_mask(rng: &mut StreamRng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < p { 0.0 } else { keep })
}

/// Softmax over `j <= i` for every row `i`; entries above the diagonal
/// become 0.
fn causal_softmax(scores: &mut Array2<f64>) {
    let t = scores.nrows();
    for i in 0..t {
        let mut row = scores.row_mut(i);
        let slice = row.as_slice_mut().expect("standard layout");
        softmax_in_place(&mut slice[..=i]);
        for v in &mut slice[i + 1..] {
            *v = 0.0;
        }
    }
}

impl Transformer {
    pub fn new(config: LmConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = stream(config.init_seed, "init", &[]);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid = Normal::new(0.0, INIT_STD / (2.0 * config.n_layers as f64).sqrt()).expect("valid std");
        let mut fill = |slot: Slot, dist: &Normal<f64>, p: &mut [f64]| {
            for v in &mut p[slot.range()] {
                *v = dist.sample(&mut rng);
            }
        };
        fill(layout.tok_emb, &normal, &mut params);
        fill(layout.pos_emb, &normal, &mut params);
        for b in &layout.blocks {
            fill(b.w_qkv, &normal, &mut params);
            fill(b.w_o, &resid, &mut params);
            fill(b.w_fc, &normal, &mut params);
            fill(b.w_proj, &resid, &mut params);
            params[b.ln1_g.range()].fill(1.0);
            params[b.ln2_g.range()].fill(1.0);
        }
        params[layout.lnf_g.range()].fill(1.0);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from a config and a flat parameter vector.
    pub fn from_params(config: LmConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::TooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: id as usize,
                size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Next-token distributions for every prefix of `tokens`. With
    /// `dropout_seed = None` dropout is off.
    pub fn forward(&self, tokens: &[TokenId], dropout_seed: Option<u64>) -> Result<LMDistribution> {
        let (logits, _) = self.forward_train(tokens, dropout_seed)?;
        Ok(LMDistribution::from_logits(&logits))
    }

    pub(crate) fn forward_train(&self, tokens: &[TokenId], dropout_seed: Option<u64>) -> Result<(Array2<f64>, Cache)> {
        self.check_input(tokens)?;
        let p = &self.params;
        let c = &self.config;
        let (t, d) = (tokens.len(), c.d_model);
        let nh = c.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut rng = dropout_seed
            .filter(|_| c.dropout > 0.0)
            .map(|seed| stream(seed, "dropout", &[]));

        let tok = self.layout.tok_emb.mat(p);
        let pos = self.layout.pos_emb.mat(p);
        let mut x = Array2::zeros((t, d));
        for (i, &id) in tokens.iter().enumerate() {
            x.row_mut(i).assign(&(&tok.row(id as usize) + &pos.row(i)));
        }
        let mask_emb = rng.as_mut().map(|r| dropout_mask(r, (t, d), c.dropout));
        if let Some(m) = &mask_emb {
            x *= m;
        }

        let mut blocks = Vec::with_capacity(c.n_layers);
        for bl in &self.layout.blocks {
            let (h1, ln1) = layer_norm(&x, bl.ln1_g.vec(p), bl.ln1_b.vec(p));
            let qkv = h1.dot(&bl.w_qkv.mat(p)) + bl.b_qkv.vec(p);
            let mut att = Array2::zeros((t, d));
            let mut probs = Vec::with_capacity(nh);
            for h in 0..nh {
                let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
                let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut sc = q.dot(&k.t()) * scale;
                causal_softmax(&mut sc);
                att.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&sc.dot(&v));
                probs.push(sc);
            }
            let mut a = att.dot(&bl.w_o.mat(p)) + bl.b_o.vec(p);
            let mask_a = rng.as_mut().map(|r| dropout_mask(r, (t, d), c.dropout));
            if let Some(m) = &mask_a {
                a *= m;
            }
            x += &a;

            let (h2, ln2) = layer_norm(&x, bl.ln2_g.vec(p), bl.ln2_b.vec(p));
            let f = h2.dot(&bl.w_fc.mat(p)) + bl.b_fc.vec(p);
            let g = f.mapv(gelu);
            let mut m = g.dot(&bl.w_proj.mat(p)) + bl.b_proj.vec(p);
            let mask_m = rng.as_mut().map(|r| dropout_mask(r, (t, d), c.dropout));
            if let Some(mm) = &mask_m {
                m *= mm;
            }
            x += &m;
            blocks.push(BlockCache {
                ln1,
                h1,
                qkv,
                probs,
                att,
                mask_a,
                ln2,
                h2,
                f,
                g,
                mask_m,
            });
        }

        let (hf, lnf) = layer_norm(&x, self.layout.lnf_g.vec(p), self.layout.lnf_b.vec(p));
        let logits = hf.dot(&tok.t());
        Ok((
            logits,
            Cache {
                ids: tokens.to_vec(),
                mask_emb,
                blocks,
                lnf,
                hf,
            },
        ))
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    pub(crate) fn backward(&self, cache: &Cache, dlogits: &Array2<f64>, grad: &mut [f64]) {
        let p = &self.params;
        let c = &self.config;
        let l = &self.layout;
        let d = c.d_model;
        let nh = c.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        let tok = l.tok_emb.mat(p);
        general_mat_mul(1.0, &dlogits.t(), &cache.hf, 1.0, &mut l.tok_emb.mat_mut(grad));
        let dhf = dlogits.dot(&tok);
        let mut dx = layer_norm_back(&dhf, &cache.lnf, l.lnf_g.vec(p), l.lnf_g, l.lnf_b, grad);

        for (bl, bc) in l.blocks.iter().zip(&cache.blocks).rev() {
            let mut dm = dx.clone();
            if let Some(m) = &bc.mask_m {
                dm *= m;
            }
            general_mat_mul(1.0, &bc.g.t(), &dm, 1.0, &mut bl.w_proj.mat_mut(grad));
            bl.b_proj.add(grad, dm.sum_axis(Axis(0)));
            let mut df = dm.dot(&bl.w_proj.mat(p).t());
            df.zip_mut_with(&bc.f, |g, &f| *g *= gelu_grad(f));
            general_mat_mul(1.0, &bc.h2.t(), &df, 1.0, &mut bl.w_fc.mat_mut(grad));
            bl.b_fc.add(grad, df.sum_axis(Axis(0)));
            let dh2 = df.dot(&bl.w_fc.mat(p).t());
            dx += &layer_norm_back(&dh2, &bc.ln2, bl.ln2_g.vec(p), bl.ln2_g, bl.ln2_b, grad);

            let mut da = dx.clone();
            if let Some(m) = &bc.mask_a {
                da *= m;
            }
            general_mat_mul(1.0, &bc.att.t(), &da, 1.0, &mut bl.w_o.mat_mut(grad));
            bl.b_o.add(grad, da.sum_axis(Axis(0)));
            let datt = da.dot(&bl.w_o.mat(p).t());

            let mut dqkv = Array2::zeros(bc.qkv.raw_dim());
            for h in 0..nh {
                let cols = h * dh..(h + 1) * dh;
                let q = bc.qkv.slice(s![.., cols.clone()]);
                let k = bc.qkv.slice(s![.., d + cols.start..d + cols.end]);
                let v = bc.qkv.slice(s![.., 2 * d + cols.start..2 * d + cols.end]);
                let pr = &bc.probs[h];
                let dout = datt.slice(s![.., cols.clone()]);
                let dp = dout.dot(&v.t());
                let dv = pr.t().dot(&dout);
                let mut ds = &dp * pr;
                let rows = ds.sum_axis(Axis(1));
                for (i, mut row) in ds.axis_iter_mut(Axis(0)).enumerate() {
                    let pi = pr.row(i);
                    row.zip_mut_with(&pi, |x, &pij| *x -= pij * rows[i]);
                }
                ds *= scale;
                dqkv.slice_mut(s![.., cols.clone()]).assign(&ds.dot(&k));
                dqkv.slice_mut(s![.., d + cols.start..d + cols.end]).assign(&ds.t().dot(&q));
                dqkv.slice_mut(s![.., 2 * d + cols.start..2 * d + cols.end]).assign(&dv);
            }
            general_mat_mul(1.0, &bc.h1.t(), &dqkv, 1.0, &mut bl.w_qkv.mat_mut(grad));
            bl.b_qkv.add(grad, dqkv.sum_axis(Axis(0)));
            let dh1 = dqkv.dot(&bl.w_qkv.mat(p).t());
            dx += &layer_norm_back(&dh1, &bc.ln1, bl.ln1_g.vec(p), bl.ln1_g, bl.ln1_b, grad);
        }

        if let Some(m) = &cache.mask_emb {
            dx *= m;
        }
        let mut gt = l.tok_emb.mat_mut(grad);
        for (i, &id) in cache.ids.iter().enumerate() {
            let mut row = gt.row_mut(id as usize);
            row += &dx.row(i);
        }
        let mut gp = l.pos_emb.mat_mut(grad);
        gp.slice_mut(s![..cache.ids.len(), ..]).scaled_add(1.0, &dx);
    }

    /// Feeds one token through the incremental decoder and returns the
    /// logits for the next position.
    fn step(&self, cache: &mut KvCache, token: TokenId) -> Array1<f64> {
        let p = &self.params;
        let c = &self.config;
        let l = &self.layout;
        let d = c.d_model;
        let nh = c.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let pos = cache.tokens.len();
        if cache.keys.len() != c.n_layers {
            cache.keys = vec![Vec::new(); c.n_layers];
            cache.values = vec![Vec::new(); c.n_layers];
        }

        let tok = l.tok_emb.mat(p);
        let mut x = &tok.row(token as usize) + &l.pos_emb.mat(p).row(pos);
        for (li, bl) in l.blocks.iter().enumerate() {
            let h1 = layer_norm_vec(&x, bl.ln1_g.vec(p), bl.ln1_b.vec(p));
            let qkv = h1.dot(&bl.w_qkv.mat(p)) + bl.b_qkv.vec(p);
            cache.keys[li].extend(qkv.slice(s![d..2 * d]).iter());
            cache.values[li].extend(qkv.slice(s![2 * d..]).iter());
            let n = pos + 1;
            let keys = ArrayView2::from_shape((n, d), &cache.keys[li]).expect("cache shape");
            let vals = ArrayView2::from_shape((n, d), &cache.values[li]).expect("cache shape");
            let mut att = Array1::zeros(d);
            for h in 0..nh {
                let cols = h * dh..(h + 1) * dh;
                let q = qkv.slice(s![cols.clone()]);
                let mut sc = keys.slice(s![.., cols.clone()]).dot(&q) * scale;
                softmax_in_place(sc.as_slice_mut().expect("contiguous"));
                att.slice_mut(s![cols.clone()])
                    .assign(&sc.dot(&vals.slice(s![.., cols.clone()])));
            }
            x += &(att.dot(&bl.w_o.mat(p)) + bl.b_o.vec(p));
            let h2 = layer_norm_vec(&x, bl.ln2_g.vec(p), bl.ln2_b.vec(p));
            let g = (h2.dot(&bl.w_fc.mat(p)) + bl.b_fc.vec(p)).mapv(gelu);
            x += &(g.dot(&bl.w_proj.mat(p)) + bl.b_proj.vec(p));
        }
        let hf = layer_norm_vec(&x, l.lnf_g.vec(p), l.lnf_b.vec(p));
        cache.tokens.push(token);
        tok.dot(&hf)
    }
}

/// Keys and values of an already processed token prefix.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    tokens: Vec<TokenId>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    last_logits: Option<Array1<f64>>,
}

impl KvCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn argmax(v: &Array1<f64>) -> TokenId {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as TokenId
}

impl SpanGenerator for Transformer {
    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn generate(&self, context: &[TokenId], stop: TokenId, max_new: usize) -> Result<Vec<TokenId>> {
        self.generate_cached(&mut KvCache::new(), context, stop, max_new)
    }

    fn generate_cached(
        &self,
        cache: &mut KvCache,
        context: &[TokenId],
        stop: TokenId,
        max_new: usize,
    ) -> Result<Vec<TokenId>> {
        if context.is_empty() {
            return Err(Error::Empty("generation context"));
        }
        if context.len() >= self.config.max_len {
            return Err(Error::TooLong {
                len: context.len(),
                max: self.config.max_len,
            });
        }
        self.check_input(context)?;
        if max_new == 0 {
            return Ok(Vec::new());
        }
        let reusable = !cache.is_empty() && context.starts_with(&cache.tokens) && cache.last_logits.is_some();
        if !reusable {
            cache.clear();
        }
        let mut logits = cache.last_logits.take();
        for &tok in &context[cache.tokens.len()..] {
            logits = Some(self.step(cache, tok));
        }
        let mut logits = logits.expect("context is non-empty");
        let mut out = Vec::new();
        loop {
            let next = argmax(&logits);
            out.push(next);
            if next == stop || out.len() == max_new || cache.tokens.len() == self.config.max_len {
                break;
            }
            logits = self.step(cache, next);
        }
        // The last emitted token was not fed; the cache stays a prefix of
        // context + out with matching logits.
        cache.last_logits = Some(logits);
        Ok(out)
    }
}
