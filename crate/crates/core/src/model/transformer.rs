//! Decoder-only transformer: pre-norm blocks of causal multi-head
//! self-attention and a GELU MLP, learned token and position embeddings,
//! and a linear readout over the vocabulary. Backpropagation is written out
//! by hand.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::config::ModelConfig;
use super::params::{LayerTensors, ParamLayout, Tensor};
use super::{ModelError, PredictorSession, SequencePredictor};
use crate::vocab::TokenId;
use crate::VOCAB_SIZE;

const LN_EPS: f64 = 1e-5;
/// Standard deviation of initial weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct Transformer {
    cfg: ModelConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    /// Attention probabilities per head, `T x T`.
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    fc: Array2<f64>,
    act: Array2<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Array2<f64>,
    logits: Array2<f64>,
}

fn layer_norm(x: ArrayView2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = &x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * &rstd.view().insert_axis(Axis(1));
    let y = &xhat * &g + &b;
    (y, LnCache { xhat, rstd })
}

/// Returns dx and accumulates dg, db.
fn layer_norm_backward(
    dy: ArrayView2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
    mut dg: ndarray::ArrayViewMut1<f64>,
    mut db: ndarray::ArrayViewMut1<f64>,
) -> Array2<f64> {
    dg += &(&dy * &cache.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let dxhat = &dy * &g;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&mean_dxhat)
        .and(&mean_dxhat_xhat)
        .and(&cache.rstd)
        .for_each(|mut row, xhat, &m1, &m2, &rstd| {
            Zip::from(&mut row).and(&xhat).for_each(|v, &xh| *v = rstd * (*v - m1 - xh * m2));
        });
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy and its gradient for one sequence.
pub struct SequenceGradient {
    /// Summed (not averaged) negative log-likelihood of the targets.
    pub loss_sum: f64,
    pub count: usize,
    pub grad: Vec<f64>,
}

impl Transformer {
    /// Normal(0, 0.02) weights with a zero readout, so the initial
    /// next-token distribution is uniform.
    pub fn new(cfg: &ModelConfig) -> Result<Self, ModelError> {
        Self::with_init(cfg, true)
    }

    /// Like [`Transformer::new`] but the readout is random too. Gradients of
    /// earlier layers vanish under a zero readout, so gradient checks use this.
    pub fn new_random_readout(cfg: &ModelConfig) -> Result<Self, ModelError> {
        Self::with_init(cfg, false)
    }

    fn with_init(cfg: &ModelConfig, zero_readout: bool) -> Result<Self, ModelError> {
        cfg.check()?;
        let layout = ParamLayout::new(cfg);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let dist = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut normal = |t: Tensor, params: &mut [f64]| {
            for v in &mut params[t.range()] {
                *v = rng.sample(dist);
            }
        };
        normal(layout.wte, &mut params);
        normal(layout.wpe, &mut params);
        for l in &layout.layers {
            for t in [l.w_qkv, l.w_o, l.w_fc, l.w_proj] {
                normal(t, &mut params);
            }
            for t in [l.ln1_g, l.ln2_g] {
                params[t.range()].fill(1.0);
            }
        }
        params[layout.lnf_g.range()].fill(1.0);
        if !zero_readout {
            normal(layout.w_out, &mut params);
        }
        Ok(Transformer { cfg: cfg.clone(), layout, params })
    }

    pub fn from_params(cfg: &ModelConfig, params: Vec<f64>) -> Result<Self, ModelError> {
        cfg.check()?;
        let layout = ParamLayout::new(cfg);
        if params.len() != layout.total {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Transformer { cfg: cfg.clone(), layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_context(&self, len: usize) -> Result<(), ModelError> {
        if len > self.cfg.window {
            return Err(ModelError::ContextTooLong { len, window: self.cfg.window });
        }
        if len == 0 {
            return Err(ModelError::EmptyContext);
        }
        Ok(())
    }

    fn embed(&self, tokens: &[TokenId]) -> Array2<f64> {
        let p = &self.params;
        let wte = self.layout.wte.mat(p);
        let wpe = self.layout.wpe.mat(p);
        let mut x = Array2::zeros((tokens.len(), self.cfg.embed_dim));
        for (t, &tok) in tokens.iter().enumerate() {
            let mut row = x.row_mut(t);
            row.assign(&wte.row(tok as usize));
            row += &wpe.row(t);
        }
        x
    }

    fn attention(&self, qkv: ArrayView2<f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let (n, d, hd) = (qkv.nrows(), self.cfg.embed_dim, self.cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let mut out = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let q = qkv.slice(s![.., h * hd..(h + 1) * hd]);
            let k = qkv.slice(s![.., d + h * hd..d + (h + 1) * hd]);
            let v = qkv.slice(s![.., 2 * d + h * hd..2 * d + (h + 1) * hd]);
            let mut scores = q.dot(&k.t()) * scale;
            for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                let row = row.as_slice_mut().expect("contiguous");
                softmax_in_place(&mut row[..=i]);
                row[i + 1..].fill(0.0);
            }
            out.slice_mut(s![.., h * hd..(h + 1) * hd]).assign(&scores.dot(&v));
            probs.push(scores);
        }
        (out, probs)
    }

    fn forward_cached(&self, tokens: &[TokenId]) -> ForwardCache {
        let p = &self.params;
        let mut x = self.embed(tokens);
        let mut layers = Vec::with_capacity(self.cfg.layers);
        for l in &self.layout.layers {
            let (h1, ln1) = layer_norm(x.view(), l.ln1_g.vec(p), l.ln1_b.vec(p));
            let qkv = h1.dot(&l.w_qkv.mat(p)) + &l.b_qkv.vec(p);
            let (attn, probs) = self.attention(qkv.view());
            x += &(attn.dot(&l.w_o.mat(p)) + &l.b_o.vec(p));
            let (h2, ln2) = layer_norm(x.view(), l.ln2_g.vec(p), l.ln2_b.vec(p));
            let fc = h2.dot(&l.w_fc.mat(p)) + &l.b_fc.vec(p);
            let act = fc.mapv(gelu);
            x += &(act.dot(&l.w_proj.mat(p)) + &l.b_proj.vec(p));
            layers.push(LayerCache { ln1, h1, qkv, probs, attn, ln2, h2, fc, act });
        }
        let (hf, lnf) = layer_norm(x.view(), self.layout.lnf_g.vec(p), self.layout.lnf_b.vec(p));
        let logits = hf.dot(&self.layout.w_out.mat(p)) + &self.layout.b_out.vec(p);
        ForwardCache { layers, lnf, hf, logits }
    }

    /// Next-token scores (logits) after every prefix of `tokens`.
    pub fn forward_all(&self, tokens: &[TokenId]) -> Result<Array2<f64>, ModelError> {
        self.check_context(tokens.len())?;
        Ok(self.forward_cached(tokens).logits)
    }

    /// Next-token scores after the full context.
    pub fn forward(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        let logits = self.forward_all(context)?;
        Ok(logits.row(logits.nrows() - 1).to_vec())
    }

    /// Summed next-token cross-entropy over all positions, and its gradient.
    pub fn loss_and_grad(&self, tokens: &[TokenId]) -> Result<SequenceGradient, ModelError> {
        self.check_context(tokens.len())?;
        if tokens.len() < 2 {
            return Ok(SequenceGradient { loss_sum: 0.0, count: 0, grad: vec![0.0; self.params.len()] });
        }
        let p = &self.params;
        let cache = self.forward_cached(tokens);
        let n = tokens.len();
        let count = n - 1;

        // d loss_sum / d logits = softmax - onehot, for positions with a target.
        let mut dlogits = cache.logits;
        let mut loss_sum = 0.0;
        for (t, mut row) in dlogits.rows_mut().into_iter().enumerate() {
            if t + 1 >= n {
                row.fill(0.0);
                continue;
            }
            let row = row.as_slice_mut().expect("contiguous");
            softmax_in_place(row);
            let target = tokens[t + 1] as usize;
            loss_sum -= row[target].max(f64::MIN_POSITIVE).ln();
            row[target] -= 1.0;
        }

        let mut grad = vec![0.0; p.len()];
        let lay = &self.layout;
        lay.w_out.mat_mut(&mut grad).assign(&cache.hf.t().dot(&dlogits));
        lay.b_out.vec_mut(&mut grad).assign(&dlogits.sum_axis(Axis(0)));
        let dhf = dlogits.dot(&lay.w_out.mat(p).t());
        let mut dx = {
            let (dg, db) = split_two(&mut grad, lay.lnf_g, lay.lnf_b);
            layer_norm_backward(dhf.view(), &cache.lnf, lay.lnf_g.vec(p), dg, db)
        };

        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            dx = self.block_backward(l, lc, dx, &mut grad);
        }

        let mut dwte = lay.wte.mat_mut(&mut grad);
        for (t, &tok) in tokens.iter().enumerate() {
            let mut row = dwte.row_mut(tok as usize);
            row += &dx.row(t);
        }
        lay.wpe.mat_mut(&mut grad).slice_mut(s![..n, ..]).assign(&dx);
        Ok(SequenceGradient { loss_sum, count, grad })
    }

    fn block_backward(&self, l: &LayerTensors, lc: &LayerCache, dx: Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
        let p = &self.params;
        let (d, hd) = (self.cfg.embed_dim, self.cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();

        // MLP: x_out = x_mid + gelu(h2 Wfc + bfc) Wproj + bproj
        l.w_proj.mat_mut(grad).assign(&lc.act.t().dot(&dx));
        l.b_proj.vec_mut(grad).assign(&dx.sum_axis(Axis(0)));
        let mut dfc = dx.dot(&l.w_proj.mat(p).t());
        Zip::from(&mut dfc).and(&lc.fc).for_each(|g, &x| *g *= gelu_grad(x));
        l.w_fc.mat_mut(grad).assign(&lc.h2.t().dot(&dfc));
        l.b_fc.vec_mut(grad).assign(&dfc.sum_axis(Axis(0)));
        let dh2 = dfc.dot(&l.w_fc.mat(p).t());
        let dx_mid = {
            let (dg, db) = split_two(grad, l.ln2_g, l.ln2_b);
            dx + layer_norm_backward(dh2.view(), &lc.ln2, l.ln2_g.vec(p), dg, db)
        };

        // Attention: x_mid = x_in + attn Wo + bo
        l.w_o.mat_mut(grad).assign(&lc.attn.t().dot(&dx_mid));
        l.b_o.vec_mut(grad).assign(&dx_mid.sum_axis(Axis(0)));
        let dattn = dx_mid.dot(&l.w_o.mat(p).t());
        let mut dqkv = Array2::zeros(lc.qkv.raw_dim());
        for (h, probs) in lc.probs.iter().enumerate() {
            let cols = |base: usize| s![.., base + h * hd..base + (h + 1) * hd];
            let q = lc.qkv.slice(cols(0));
            let k = lc.qkv.slice(cols(d));
            let v = lc.qkv.slice(cols(2 * d));
            let dout = dattn.slice(cols(0));
            dqkv.slice_mut(cols(2 * d)).assign(&probs.t().dot(&dout));
            let mut ds = dout.dot(&v.t());
            Zip::from(ds.rows_mut()).and(probs.rows()).for_each(|mut dp, pr| {
                let dot = dp.dot(&pr);
                Zip::from(&mut dp).and(&pr).for_each(|g, &pv| *g = pv * (*g - dot) * scale);
            });
            dqkv.slice_mut(cols(0)).assign(&ds.dot(&k));
            dqkv.slice_mut(cols(d)).assign(&ds.t().dot(&q));
        }
        l.w_qkv.mat_mut(grad).assign(&lc.h1.t().dot(&dqkv));
        l.b_qkv.vec_mut(grad).assign(&dqkv.sum_axis(Axis(0)));
        let dh1 = dqkv.dot(&l.w_qkv.mat(p).t());
        let (dg, db) = split_two(grad, l.ln1_g, l.ln1_b);
        dx_mid + layer_norm_backward(dh1.view(), &lc.ln1, l.ln1_g.vec(p), dg, db)
    }

    /// Summed cross-entropy and target count without gradients.
    pub fn loss(&self, tokens: &[TokenId]) -> Result<(f64, usize), ModelError> {
        let logits = self.forward_all(tokens)?;
        let mut loss = 0.0;
        for t in 0..tokens.len().saturating_sub(1) {
            let mut row = logits.row(t).to_vec();
            softmax_in_place(&mut row);
            loss -= row[tokens[t + 1] as usize].max(f64::MIN_POSITIVE).ln();
        }
        Ok((loss, tokens.len().saturating_sub(1)))
    }
}

/// Mutable views of two adjacent tensors (gain then bias).
fn split_two(grad: &mut [f64], g: Tensor, b: Tensor) -> (ndarray::ArrayViewMut1<'_, f64>, ndarray::ArrayViewMut1<'_, f64>) {
    debug_assert_eq!(g.offset + g.len(), b.offset);
    let (lo, hi) = grad[g.offset..b.offset + b.len()].split_at_mut(g.len());
    (ndarray::ArrayViewMut1::from(lo), ndarray::ArrayViewMut1::from(hi))
}

/// Incremental decoding with cached keys and values.
pub struct TransformerSession<'a> {
    model: &'a Transformer,
    /// Per layer: keys and values of all pushed positions (`len x d` used).
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
    len: usize,
    last_logits: Option<Vec<f64>>,
}

impl<'a> TransformerSession<'a> {
    fn new(model: &'a Transformer) -> Self {
        let shape = (model.cfg.window, model.cfg.embed_dim);
        TransformerSession {
            model,
            keys: vec![Array2::zeros(shape); model.cfg.layers],
            values: vec![Array2::zeros(shape); model.cfg.layers],
            len: 0,
            last_logits: None,
        }
    }
}

impl PredictorSession for TransformerSession<'_> {
    fn push(&mut self, token: TokenId) -> Result<(), ModelError> {
        let m = self.model;
        if self.len >= m.cfg.window {
            return Err(ModelError::ContextTooLong { len: self.len + 1, window: m.cfg.window });
        }
        if token as usize >= VOCAB_SIZE {
            return Err(ModelError::UnknownToken(token));
        }
        let p = &m.params;
        let (d, hd) = (m.cfg.embed_dim, m.cfg.head_dim());
        let scale = 1.0 / (hd as f64).sqrt();
        let pos = self.len;
        let mut x = (&m.layout.wte.mat(p).row(token as usize) + &m.layout.wpe.mat(p).row(pos)).insert_axis(Axis(0));
        for (li, l) in m.layout.layers.iter().enumerate() {
            let (h1, _) = layer_norm(x.view(), l.ln1_g.vec(p), l.ln1_b.vec(p));
            let qkv = h1.dot(&l.w_qkv.mat(p)) + &l.b_qkv.vec(p);
            self.keys[li].row_mut(pos).assign(&qkv.slice(s![0, d..2 * d]));
            self.values[li].row_mut(pos).assign(&qkv.slice(s![0, 2 * d..]));
            let mut attn = Array2::zeros((1, d));
            for h in 0..m.cfg.heads {
                let q = qkv.slice(s![0, h * hd..(h + 1) * hd]);
                let k = self.keys[li].slice(s![..=pos, h * hd..(h + 1) * hd]);
                let v = self.values[li].slice(s![..=pos, h * hd..(h + 1) * hd]);
                let raw: Array1<f64> = k.dot(&q);
                let mut scores: Vec<f64> = raw.iter().map(|v| v * scale).collect();
                softmax_in_place(&mut scores);
                attn.slice_mut(s![0, h * hd..(h + 1) * hd]).assign(&Array1::from(scores).dot(&v));
            }
            x += &(attn.dot(&l.w_o.mat(p)) + &l.b_o.vec(p));
            let (h2, _) = layer_norm(x.view(), l.ln2_g.vec(p), l.ln2_b.vec(p));
            let act = (h2.dot(&l.w_fc.mat(p)) + &l.b_fc.vec(p)).mapv(gelu);
            x += &(act.dot(&l.w_proj.mat(p)) + &l.b_proj.vec(p));
        }
        let (hf, _) = layer_norm(x.view(), m.layout.lnf_g.vec(p), m.layout.lnf_b.vec(p));
        let logits = hf.dot(&m.layout.w_out.mat(p)) + &m.layout.b_out.vec(p);
        self.last_logits = Some(logits.row(0).to_vec());
        self.len += 1;
        Ok(())
    }

    fn scores(&mut self) -> Result<Vec<f64>, ModelError> {
        self.last_logits.clone().ok_or(ModelError::EmptyContext)
    }
}

impl SequencePredictor for Transformer {
    fn name(&self) -> String {
        format!(
            "transformer(layers={}, heads={}, embed={}, window={})",
            self.cfg.layers, self.cfg.heads, self.cfg.embed_dim, self.cfg.window
        )
    }

    fn window(&self) -> usize {
        self.cfg.window
    }

    fn scores(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        self.forward(context)
    }

    fn session(&self) -> Box<dyn PredictorSession + '_> {
        Box::new(TransformerSession::new(self))
    }

    fn as_dyn(&self) -> &dyn SequencePredictor {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { layers: 2, heads: 2, embed_dim: 16, window: 32, ff_dim: 32, seed: 7, ..Default::default() }
    }

    #[test]
    fn zero_readout_is_uniform() {
        let m = Transformer::new(&small()).unwrap();
        let scores = m.forward(&[0, 1, 150, 200]).unwrap();
        assert_eq!(scores.len(), VOCAB_SIZE);
        assert!(scores.iter().all(|&s| s == scores[0]));
    }

    #[test]
    fn causal_prefix_invariance() {
        let m = Transformer::new_random_readout(&small()).unwrap();
        let seq: Vec<TokenId> = vec![0, 1, 8, 137, 3, 147, 420, 275, 430, 4, 2];
        let full = m.forward_all(&seq).unwrap();
        for k in 1..=seq.len() {
            let prefix = m.forward(&seq[..k]).unwrap();
            for (a, b) in prefix.iter().zip(full.row(k - 1)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        // perturbing a suffix leaves earlier predictions unchanged
        let mut other = seq.clone();
        other[7] = 300;
        let changed = m.forward_all(&other).unwrap();
        for t in 0..7 {
            for (a, b) in full.row(t).iter().zip(changed.row(t)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn session_matches_full_forward() {
        let m = Transformer::new_random_readout(&small()).unwrap();
        let seq: Vec<TokenId> = vec![0, 1, 9, 140, 3, 160, 410, 288, 440, 4];
        let full = m.forward_all(&seq).unwrap();
        let mut session = m.session();
        for (t, &tok) in seq.iter().enumerate() {
            session.push(tok).unwrap();
            let s = session.scores().unwrap();
            for (a, b) in s.iter().zip(full.row(t)) {
                assert!((a - b).abs() < 1e-9, "position {t}");
            }
        }
    }

    #[test]
    fn context_too_long() {
        let m = Transformer::new(&small()).unwrap();
        let ctx = vec![0; 33];
        assert_eq!(m.forward(&ctx), Err(ModelError::ContextTooLong { len: 33, window: 32 }));
        let mut session = m.session();
        for _ in 0..32 {
            session.push(0).unwrap();
        }
        assert!(session.push(0).is_err());
    }

    #[test]
    fn loss_matches_forward() {
        let m = Transformer::new_random_readout(&small()).unwrap();
        let seq: Vec<TokenId> = vec![0, 1, 9, 140, 3, 160];
        let (loss, count) = m.loss(&seq).unwrap();
        let g = m.loss_and_grad(&seq).unwrap();
        assert_eq!(count, 5);
        assert!((loss - g.loss_sum).abs() < 1e-10);
        let uniform = Transformer::new(&small()).unwrap().loss(&seq).unwrap().0;
        assert!((uniform - 5.0 * (VOCAB_SIZE as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn gelu_derivative() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
