//! Next-token models over the event vocabulary.

mod checkpoint;
mod config;
pub mod gradcheck;
mod ngram;
mod params;
mod train;
mod transformer;

use std::path::Path;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::ModelConfig;
pub use ngram::NGramModel;
pub use params::{LayerTensors, ParamLayout, Tensor, TensorSpec};
pub use train::{evaluate, train, EvalReport, TrainOptions, TrainReport};
pub use transformer::{SequenceGradient, Transformer, TransformerSession, INIT_STD};

use crate::vocab::TokenId;
use crate::VOCAB_SIZE;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("context of {len} tokens exceeds the model window of {window}")]
    ContextTooLong { len: usize, window: usize },
    #[error("empty context")]
    EmptyContext,
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was built for vocabulary {found}, expected {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("training diverged: non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("no training data: {0}")]
    NoData(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// Incremental scoring: push tokens one at a time, read next-token scores.
pub trait PredictorSession {
    fn push(&mut self, token: TokenId) -> Result<(), ModelError>;
    /// Unnormalized log-scores (logits) for the token after everything pushed.
    fn scores(&mut self) -> Result<Vec<f64>, ModelError>;
}

/// Anything that scores the next token given a prefix.
pub trait SequencePredictor: Send + Sync {
    fn name(&self) -> String;
    /// Longest context the predictor accepts.
    fn window(&self) -> usize;
    fn scores(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError>;

    /// Default session rescans the full context on each query.
    fn session(&self) -> Box<dyn PredictorSession + '_> {
        Box::new(RescanSession { model: self.as_dyn(), context: Vec::new() })
    }

    #[doc(hidden)]
    fn as_dyn(&self) -> &dyn SequencePredictor;
}

struct RescanSession<'a> {
    model: &'a dyn SequencePredictor,
    context: Vec<TokenId>,
}

impl PredictorSession for RescanSession<'_> {
    fn push(&mut self, token: TokenId) -> Result<(), ModelError> {
        if token as usize >= VOCAB_SIZE {
            return Err(ModelError::UnknownToken(token));
        }
        if self.context.len() >= self.model.window() {
            return Err(ModelError::ContextTooLong { len: self.context.len() + 1, window: self.model.window() });
        }
        self.context.push(token);
        Ok(())
    }

    fn scores(&mut self) -> Result<Vec<f64>, ModelError> {
        self.model.scores(&self.context)
    }
}

/// Flat scores; with grammar masking this samples uniformly among legal tokens.
#[derive(Debug, Clone)]
pub struct UniformPredictor {
    pub window: usize,
}

impl Default for UniformPredictor {
    fn default() -> Self {
        UniformPredictor { window: 4096 }
    }
}

impl SequencePredictor for UniformPredictor {
    fn name(&self) -> String {
        "uniform".into()
    }

    fn window(&self) -> usize {
        self.window
    }

    fn scores(&self, context: &[TokenId]) -> Result<Vec<f64>, ModelError> {
        if context.len() > self.window {
            return Err(ModelError::ContextTooLong { len: context.len(), window: self.window });
        }
        Ok(vec![0.0; VOCAB_SIZE])
    }

    fn as_dyn(&self) -> &dyn SequencePredictor {
        self
    }
}

/// Loads a transformer checkpoint or an n-gram model, sniffing the format.
pub fn load_predictor(path: &Path) -> Result<Box<dyn SequencePredictor>, ModelError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        Ok(Box::new(checkpoint::checkpoint_from_bytes(&bytes)?))
    } else {
        Ok(Box::new(NGramModel::from_json(&bytes)?))
    }
}
