//! Next-token cross-entropy training with Adam and gradient-norm clipping.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ModelConfig, ModelError, Transformer};
use crate::vocab::TokenId;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Global gradient norm above which the update is rescaled.
pub const CLIP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Evaluate on the whole corpus every this many steps (0 = never).
    pub eval_every: usize,
    /// Stop once the full-corpus loss falls below this.
    pub target_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean loss per target token of each step's batch.
    pub losses: Vec<f64>,
    /// (step, full-corpus mean loss) at each evaluation.
    pub evals: Vec<(usize, f64)>,
    pub steps: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Mean cross-entropy per target token, in nats.
    pub loss: f64,
    /// Fraction of positions where the argmax prediction equals the next token.
    pub accuracy: f64,
    pub tokens: usize,
}

/// Teacher-forced loss and argmax accuracy over a corpus.
pub fn evaluate(model: &Transformer, corpus: &[Vec<TokenId>]) -> Result<EvalReport, ModelError> {
    let per_seq: Vec<(f64, usize, usize)> = corpus
        .par_iter()
        .map(|seq| {
            let logits = model.forward_all(seq)?;
            let mut loss = 0.0;
            let mut hits = 0;
            for t in 0..seq.len().saturating_sub(1) {
                let row = logits.row(t);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let target = seq[t + 1] as usize;
                loss += lse - row[target];
                let argmax = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0);
                hits += usize::from(argmax == target);
            }
            Ok((loss, hits, seq.len().saturating_sub(1)))
        })
        .collect::<Result<_, ModelError>>()?;
    let (loss, hits, tokens) = per_seq.iter().fold((0.0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if tokens == 0 {
        return Err(ModelError::NoData("corpus has no target tokens".into()));
    }
    Ok(EvalReport { loss: loss / tokens as f64, accuracy: hits as f64 / tokens as f64, tokens })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Mean loss and gradient of one batch, summed in batch order so the result
/// does not depend on thread scheduling.
pub(crate) fn batch_gradient(model: &Transformer, batch: &[&[TokenId]]) -> Result<(f64, Vec<f64>), ModelError> {
    let parts = batch
        .par_iter()
        .map(|seq| model.loss_and_grad(seq))
        .collect::<Result<Vec<_>, ModelError>>()?;
    let count: usize = parts.iter().map(|p| p.count).sum();
    if count == 0 {
        return Err(ModelError::NoData("batch has no target tokens".into()));
    }
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    for p in &parts {
        loss += p.loss_sum;
        for (g, x) in grad.iter_mut().zip(&p.grad) {
            *g += x;
        }
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Trains from the configured initialization.
///
/// Each step draws `cfg.batch` distinct sequences (the whole corpus when it
/// is no larger than the batch).
pub fn train(
    cfg: &ModelConfig,
    corpus: &[Vec<TokenId>],
    opts: &TrainOptions,
    mut on_step: impl FnMut(usize, f64),
) -> Result<(Transformer, TrainReport), ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::NoData("empty dataset".into()));
    }
    if let Some(long) = corpus.iter().find(|s| s.len() > cfg.window) {
        return Err(ModelError::ContextTooLong { len: long.len(), window: cfg.window });
    }
    let mut model = Transformer::new(cfg)?;
    let mut adam = Adam::new(model.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut report = TrainReport { losses: Vec::new(), evals: Vec::new(), steps: 0, stopped_early: false };

    for step in 1..=cfg.steps {
        let batch: Vec<&[TokenId]> = if corpus.len() <= cfg.batch {
            corpus.iter().map(Vec::as_slice).collect()
        } else {
            let mut idx = sample(&mut rng, corpus.len(), cfg.batch).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| corpus[i].as_slice()).collect()
        };
        let (loss, mut grad) = batch_gradient(&model, &batch)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite { what: "loss", step });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(ModelError::NonFinite { what: "gradient norm", step });
        }
        if norm > CLIP_NORM {
            let s = CLIP_NORM / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        adam.step(model.params_mut(), &grad, cfg.learning_rate);
        report.losses.push(loss);
        report.steps = step;
        on_step(step, loss);

        if opts.eval_every > 0 && step % opts.eval_every == 0 {
            let eval = evaluate(&model, corpus)?;
            report.evals.push((step, eval.loss));
            if opts.target_loss.is_some_and(|t| eval.loss < t) {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<Vec<TokenId>> {
        vec![vec![0, 1, 8, 137, 3, 147, 448, 4, 2], vec![0, 1, 136, 140, 3, 190, 450, 4, 2]]
    }

    fn cfg() -> ModelConfig {
        ModelConfig { layers: 1, heads: 2, embed_dim: 16, window: 16, ff_dim: 32, batch: 4, steps: 30, ..Default::default() }
    }

    #[test]
    fn zero_learning_rate_is_constant() {
        let c = ModelConfig { learning_rate: 0.0, ..cfg() };
        let (_, r) = train(&c, &toy(), &TrainOptions::default(), |_, _| {}).unwrap();
        assert!(r.losses.iter().all(|&l| l == r.losses[0]));
    }

    #[test]
    fn same_seed_same_curve_and_loss_drops() {
        let a = train(&cfg(), &toy(), &TrainOptions::default(), |_, _| {}).unwrap().1;
        let b = train(&cfg(), &toy(), &TrainOptions::default(), |_, _| {}).unwrap().1;
        assert_eq!(a.losses, b.losses);
        assert!(a.losses.last().unwrap() < &a.losses[0]);
    }

    #[test]
    fn rejects_long_and_empty() {
        assert!(matches!(train(&cfg(), &[], &TrainOptions::default(), |_, _| {}), Err(ModelError::NoData(_))));
        let long = vec![vec![0; 17]];
        assert!(matches!(
            train(&cfg(), &long, &TrainOptions::default(), |_, _| {}),
            Err(ModelError::ContextTooLong { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let c = ModelConfig { learning_rate: f64::INFINITY, steps: 3, ..cfg() };
        let err = train(&c, &toy(), &TrainOptions::default(), |_, _| {}).unwrap_err();
        assert!(matches!(err, ModelError::NonFinite { .. }), "{err}");
    }
}
