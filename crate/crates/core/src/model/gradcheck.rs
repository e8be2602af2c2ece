//! Finite-difference verification of the analytic gradient.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::batch_gradient;
use super::{ModelError, ParamLayout, Transformer};
use crate::vocab::TokenId;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Minimum number of parameters to probe; spread over every tensor.
    pub samples: usize,
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor, so gradients that are zero on both sides count as exact.
    pub floor: f64,
    pub seed: u64,
    /// Restrict probing to these tensors (all when `None`).
    pub tensors: Option<Vec<String>>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { samples: 240, step: 1e-4, floor: 1e-6, seed: 0, tensors: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Picks parameter indices, stratified by tensor. Embedding rows are drawn
/// only from tokens and positions that occur in the batch, since the others
/// have identically zero gradient.
fn choose_indices(layout: &ParamLayout, batch: &[&[TokenId]], opts: &GradCheckOptions) -> Vec<(String, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let specs: Vec<_> = layout
        .specs
        .iter()
        .filter(|s| opts.tensors.as_ref().is_none_or(|names| names.contains(&s.name)))
        .collect();
    if specs.is_empty() {
        return Vec::new();
    }
    let per = opts.samples.div_ceil(specs.len());
    let mut tokens: Vec<usize> = batch.iter().flat_map(|s| s.iter().map(|&t| t as usize)).collect();
    tokens.sort_unstable();
    tokens.dedup();
    let max_len = batch.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for s in specs {
        let [rows, cols] = s.shape;
        let row_pool: Vec<usize> = match s.name.as_str() {
            "wte" => tokens.clone(),
            "wpe" => (0..max_len.min(rows)).collect(),
            _ => (0..rows).collect(),
        };
        for _ in 0..per {
            let Some(&r) = row_pool.choose(&mut rng) else { break };
            let c = rng.random_range(0..cols);
            out.push((s.name.clone(), s.offset + r * cols + c));
        }
    }
    out
}

/// Compares the analytic gradient of the batch mean loss with central
/// differences. `mutate` may tamper with the analytic gradient before the
/// comparison (used to confirm the check can fail).
pub fn grad_check(
    model: &Transformer,
    batch: &[&[TokenId]],
    opts: &GradCheckOptions,
    mutate: impl Fn(&ParamLayout, &mut [f64]),
) -> Result<GradCheckReport, ModelError> {
    let (_, mut grad) = batch_gradient(model, batch)?;
    mutate(model.layout(), &mut grad);
    let mut work = model.clone();
    let loss_at = |m: &Transformer| -> Result<f64, ModelError> {
        let mut total = 0.0;
        let mut count = 0;
        for seq in batch {
            let (l, c) = m.loss(seq)?;
            total += l;
            count += c;
        }
        Ok(total / count as f64)
    };
    let mut probes = Vec::new();
    for (tensor, i) in choose_indices(model.layout(), batch, opts) {
        let orig = work.params()[i];
        work.params_mut()[i] = orig + opts.step;
        let plus = loss_at(&work)?;
        work.params_mut()[i] = orig - opts.step;
        let minus = loss_at(&work)?;
        work.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let analytic = grad[i];
        probes.push(Probe { tensor, index: i, analytic, numeric, rel_error: relative_error(analytic, numeric, opts.floor) });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, probes })
}

/// Doubles the gradient of one named tensor.
pub fn corrupt_tensor(name: &str) -> impl Fn(&ParamLayout, &mut [f64]) + '_ {
    move |layout, grad| {
        if let Some(t) = layout.find(name) {
            grad[t.range()].iter_mut().for_each(|g| *g *= 2.0);
        }
    }
}
