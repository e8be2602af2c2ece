use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape and training hyperparameters of the decoder-only model.
///
/// The default is a desk-scale configuration; the published scale
/// (6 layers, 8 heads, 512 wide, 2048 window) is [`ModelConfig::full_scale`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub ff_dim: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            embed_dim: 128,
            window: 512,
            ff_dim: 512,
            learning_rate: 3e-3,
            batch: 8,
            steps: 2000,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        ModelConfig { layers: 6, heads: 8, embed_dim: 512, window: 2048, ff_dim: 2048, ..Default::default() }
    }

    /// Under 10k parameters; used for gradient checking.
    pub fn tiny() -> Self {
        ModelConfig { layers: 2, heads: 2, embed_dim: 8, window: 16, ff_dim: 16, ..Default::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.embed_dim == 0 || self.window == 0 || self.ff_dim == 0 {
            return bad("layers, heads, embed_dim, window and ff_dim must be positive");
        }
        if self.embed_dim % self.heads != 0 {
            return bad("embed_dim must be divisible by heads");
        }
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be nonnegative");
        }
        Ok(())
    }
}
