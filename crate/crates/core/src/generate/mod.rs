//! Constrained sampling: track inpainting, bar inpainting and iterative
//! resampling over any [`SequencePredictor`].
//!
//! Every sampled token is drawn under the grammar mask, so whatever the
//! predictor does, the output decodes. Instrument sets and density levels
//! are enforced at the token level.

mod grammar;
mod sampler;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grammar::{GrammarState, Phase, TrackSlot};
pub use sampler::{sample_token, sampling_distribution, SamplerParams};

use crate::codec::{decode, decode_any, encode_barfill, encode_multitrack, BarSelection, CodecError, TokenSequence};
use crate::model::{ModelError, SequencePredictor};
use crate::piece::{Instrument, Piece, PieceError};
use crate::vocab::{Token, TokenId};
use crate::DENSITY_LEVELS;

/// Bar-count cap for the first track of an unconditioned generation.
pub const DEFAULT_MAX_BARS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("every token is masked")]
    AllMasked,
    #[error("step budget of {0} tokens exhausted before the last end token")]
    StepBudgetExceeded(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Piece(#[from] PieceError),
}

/// Constraints for one new track. `allowed_instruments: None` allows all 129.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRequest {
    #[serde(default)]
    pub allowed_instruments: Option<Vec<Instrument>>,
    #[serde(default)]
    pub density: Option<u8>,
}

impl TrackRequest {
    pub fn instrument(instrument: Instrument) -> Self {
        TrackRequest { allowed_instruments: Some(vec![instrument]), density: None }
    }

    fn to_slot(&self) -> Result<TrackSlot, GenerateError> {
        let allowed: BTreeSet<Instrument> = match &self.allowed_instruments {
            None => Instrument::all().collect(),
            Some(list) => list.iter().copied().collect(),
        };
        if allowed.is_empty() {
            return Err(GenerateError::InvalidRequest("allowed_instruments must not be empty".into()));
        }
        if let Some(d) = self.density.filter(|&d| d >= DENSITY_LEVELS) {
            return Err(GenerateError::InvalidRequest(format!("density {d} is not in 0..{DENSITY_LEVELS}")));
        }
        Ok(TrackSlot { allowed, density: self.density })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GenerationMode {
    /// Append one new track per entry.
    TrackInpaint {
        tracks: Vec<TrackRequest>,
        /// Bar cap when the base piece is empty.
        #[serde(default)]
        max_bars: Option<usize>,
    },
    /// Regenerate the selected (track, bar) cells.
    BarInpaint { selection: BarSelection },
    /// Regenerate each track in turn conditioned on the others.
    Resample { rounds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    #[serde(flatten)]
    pub mode: GenerationMode,
    #[serde(default)]
    pub sampler: SamplerParams,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub piece: Piece,
    pub densities: Vec<u8>,
    /// Full token stream of the last generation call: context then sampled tokens.
    pub sequence: TokenSequence,
    pub context_len: usize,
    /// Number of sampling runs (more than one for resampling).
    pub calls: usize,
}

impl Generated {
    pub fn new_tokens(&self) -> &[Token] {
        &self.sequence.tokens[self.context_len..]
    }
}

/// Samples a continuation of `context` until the grammar reports completion.
pub fn continue_sequence(
    predictor: &dyn SequencePredictor,
    context: &[TokenId],
    mut grammar: GrammarState,
    params: &SamplerParams,
) -> Result<Vec<TokenId>, GenerateError> {
    params.check()?;
    let window = predictor.window();
    if context.len() > window {
        return Err(ModelError::ContextTooLong { len: context.len(), window }.into());
    }
    let budget = params.max_steps.unwrap_or(2 * window);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut session = predictor.session();
    for &t in context {
        session.push(t)?;
    }
    let mut out = Vec::new();
    while !grammar.is_done() {
        if out.len() == budget {
            return Err(GenerateError::StepBudgetExceeded(budget));
        }
        let mask = grammar.mask();
        let mut live = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i as TokenId);
        let token = match (live.next(), live.next()) {
            (None, _) => return Err(GenerateError::AllMasked),
            // forced move: the model cannot change the outcome
            (Some(only), None) => only,
            _ => sample_token(&session.scores()?, params, &mask, &mut rng)?,
        };
        grammar.advance_id(token).map_err(|e| GenerateError::InvalidRequest(format!("grammar: {e}")))?;
        out.push(token);
        if !grammar.is_done() {
            session.push(token)?;
        }
    }
    Ok(out)
}

fn check_densities(piece: &Piece, densities: &[u8]) -> Result<(), GenerateError> {
    if densities.len() != piece.n_tracks() {
        return Err(CodecError::DensityCount { expected: piece.n_tracks(), found: densities.len() }.into());
    }
    Ok(())
}

/// Appends `tracks.len()` new tracks to `base` (which may be empty).
pub fn generate_tracks(
    predictor: &dyn SequencePredictor,
    base: &Piece,
    densities: &[u8],
    tracks: &[TrackRequest],
    max_bars: Option<usize>,
    params: &SamplerParams,
) -> Result<Generated, GenerateError> {
    check_densities(base, densities)?;
    if tracks.is_empty() {
        return Err(GenerateError::InvalidRequest("at least one new track is required".into()));
    }
    let slots = tracks.iter().map(TrackRequest::to_slot).collect::<Result<Vec<_>, _>>()?;
    if max_bars == Some(0) {
        return Err(GenerateError::InvalidRequest("max_bars must be positive".into()));
    }
    let context = encode_multitrack(base, densities)?;
    let n_bars = (!base.is_empty()).then(|| base.n_bars());
    let grammar = GrammarState::for_tracks(slots, n_bars, max_bars.unwrap_or(DEFAULT_MAX_BARS));
    let ids = context.ids();
    let new = continue_sequence(predictor, &ids, grammar, params)?;
    let all: Vec<TokenId> = ids.iter().chain(&new).copied().collect();
    let sequence = TokenSequence::from_ids(context.kind, &all)?;
    let (piece, densities) = decode(&sequence)?;
    Ok(Generated { piece, densities, sequence, context_len: ids.len(), calls: 1 })
}

/// Regenerates the selected bars; everything else is carried over verbatim.
pub fn inpaint_bars(
    predictor: &dyn SequencePredictor,
    base: &Piece,
    densities: &[u8],
    selection: &BarSelection,
    params: &SamplerParams,
) -> Result<Generated, GenerateError> {
    check_densities(base, densities)?;
    if selection.is_empty() {
        return Err(GenerateError::InvalidSelection("no bars selected".into()));
    }
    if let Err(e) = selection.check(base) {
        return Err(GenerateError::InvalidSelection(e.to_string()));
    }
    if selection.len() == base.n_tracks() * base.n_bars() {
        return Err(GenerateError::InvalidSelection("every bar is selected; nothing to condition on".into()));
    }
    // The encoding ends with the original fill bodies; condition only on
    // what precedes them.
    let mut context = encode_barfill(base, selection, densities)?;
    let split = context.tokens.iter().rposition(|t| *t == Token::TrackEnd).map_or(0, |i| i + 1);
    context.tokens.truncate(split);
    let ids = context.ids();
    let new = continue_sequence(predictor, &ids, GrammarState::for_fills(selection.len()), params)?;
    let all: Vec<TokenId> = ids.iter().chain(&new).copied().collect();
    let sequence = TokenSequence::from_ids(context.kind, &all)?;
    let (piece, densities) = decode_any(&sequence)?;
    Ok(Generated { piece, densities, sequence, context_len: ids.len(), calls: 1 })
}

/// Gibbs-like pass: for each round and each track `i`, drop track `i` and
/// generate a replacement conditioned on the rest, keeping its instrument
/// and density level. The replacement takes the original position.
pub fn resample_iteratively(
    predictor: &dyn SequencePredictor,
    piece: &Piece,
    densities: &[u8],
    rounds: usize,
    params: &SamplerParams,
) -> Result<Generated, GenerateError> {
    check_densities(piece, densities)?;
    if piece.n_tracks() < 2 {
        return Err(GenerateError::InvalidRequest("iterative resampling needs at least two tracks".into()));
    }
    let mut current = piece.clone();
    let mut levels = densities.to_vec();
    let mut last = None;
    let mut calls = 0usize;
    for _ in 0..rounds {
        for i in 0..current.n_tracks() {
            let keep: Vec<usize> = (0..current.n_tracks()).filter(|&j| j != i).collect();
            let rest = current.select_tracks(&keep);
            let rest_levels: Vec<u8> = keep.iter().map(|&j| levels[j]).collect();
            let request = TrackRequest {
                allowed_instruments: Some(vec![current.tracks()[i].instrument]),
                density: Some(levels[i]),
            };
            let call_params = SamplerParams { seed: params.seed.wrapping_add(calls as u64), ..params.clone() };
            let g = generate_tracks(predictor, &rest, &rest_levels, &[request], None, &call_params)?;
            calls += 1;
            let new_track = g.piece.tracks().last().expect("one new track").clone();
            current = current.with_track_replaced(i, new_track)?;
            levels[i] = *g.densities.last().expect("one new track");
            last = Some(g);
        }
    }
    let sequence = encode_multitrack(&current, &levels)?;
    let context_len = last.map_or(sequence.len(), |g| g.context_len);
    Ok(Generated { piece: current, densities: levels, sequence, context_len, calls })
}

/// Runs any request mode against `base`.
pub fn generate(
    predictor: &dyn SequencePredictor,
    base: &Piece,
    densities: &[u8],
    request: &GenerationRequest,
) -> Result<Generated, GenerateError> {
    match &request.mode {
        GenerationMode::TrackInpaint { tracks, max_bars } => {
            generate_tracks(predictor, base, densities, tracks, *max_bars, &request.sampler)
        }
        GenerationMode::BarInpaint { selection } => inpaint_bars(predictor, base, densities, selection, &request.sampler),
        GenerationMode::Resample { rounds } => resample_iteratively(predictor, base, densities, *rounds, &request.sampler),
    }
}
