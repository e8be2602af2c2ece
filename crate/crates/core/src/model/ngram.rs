use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ModelError, SequencePredictor};
use crate::vocab::TokenId;
use crate::VOCAB_SIZE;

/// Count-based baseline: backs off to the longest context seen in training
/// and scores with add-alpha smoothing over that context's counts.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    /// Context (last `k < order` tokens) -> next-token counts.
    table: HashMap<Vec<TokenId>, BTreeMap<TokenId, u32>>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u32)>,
}

#[derive(Serialize, Deserialize)]
struct NGramJson {
    version: u32,
    kind: String,
    order: usize,
    alpha: f64,
    entries: Vec<Entry>,
}

impl NGramModel {
    pub const DEFAULT_ALPHA: f64 = 0.01;

    pub fn new(order: usize, alpha: f64) -> Result<Self, ModelError> {
        if order == 0 || !(alpha > 0.0) {
            return Err(ModelError::Config("n-gram order must be positive and alpha > 0".into()));
        }
        Ok(NGramModel { order, alpha, table: HashMap::new() })
    }

    pub fn fit<'a>(order: usize, alpha: f64, corpus: impl IntoIterator<Item = &'a [TokenId]>) -> Result<Self, ModelError> {
        let mut m = Self::new(order, alpha)?;
        for seq in corpus {
            m.observe(seq);
        }
        Ok(m)
    }

    pub fn observe(&mut self, seq: &[TokenId]) {
        for t in 1..seq.len() {
            for k in 0..self.order.min(t + 1) {
                let ctx = seq[t - k..t].to_vec();
                *self.table.entry(ctx).or_default().entry(seq[t]).or_insert(0) += 1;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn to_json(&self) -> String {
        let mut entries: Vec<Entry> = self
            .table
            .iter()
            .map(|(c, n)| Entry { context: c.clone(), next: n.iter().map(|(&t, &c)| (t, c)).collect() })
            .collect();
        entries.sort_by(|a, b| (a.context.len(), &a.context).cmp(&(b.context.len(), &b.context)));
        serde_json::to_string(&NGramJson {
            version: 1,
            kind: "ngram".into(),
            order: self.order,
            alpha: self.alpha,
            entries,
        })
        .expect("serializable")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        let j: NGramJson = serde_json::from_slice(bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if j.kind != "ngram" || j.version != 1 {
            return Err(ModelError::Checkpoint("not an n-gram model".into()));
        }
        let mut m = Self::new(j.order, j.alpha)?;
        for e in j.entries {
            if e.context.len() >= j.order || e.next.iter().any(|&(t, _)| t as usize >= VOCAB_SIZE) {
                return Err(ModelError::Checkpoint("n-gram entry out of range".into()));
            }
            m.table.insert(e.context, e.next.into_iter().collect());
        }
        Ok(m)
    }
}

impl SequencePredictor for NGramModel {
    fn name(&self) -> String {
        format!("ngram(order={})", self.order)
    }

    fn window(&self) -> usize {
        1 << 20
    }

    fn scores(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        let longest = (self.order - 1).min(context.len());
        let counts = (0..=longest)
            .rev()
            .find_map(|k| self.table.get(&context[context.len() - k..]));
        let mut out = vec![(self.alpha).ln(); VOCAB_SIZE];
        if let Some(counts) = counts {
            let total: u32 = counts.values().sum();
            let denom = (f64::from(total) + self.alpha * VOCAB_SIZE as f64).ln();
            for v in out.iter_mut() {
                *v -= denom;
            }
            for (&t, &c) in counts {
                out[t as usize] = (f64::from(c) + self.alpha).ln() - denom;
            }
        }
        Ok(out)
    }

    fn as_dyn(&self) -> &dyn SequencePredictor {
        self
    }
}
