//! The pianoroll JSON shape shared by the service, the store and the CLI.

use serde::{Deserialize, Serialize};
use trackfill_core::piece::PieceError;
use trackfill_core::{Bar, Instrument, NoteEvent, Piece, QuantizedTrack, DENSITY_LEVELS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PianoRoll {
    pub n_bars: usize,
    pub tracks: Vec<PianoRollTrack>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PianoRollTrack {
    pub instrument: Instrument,
    pub density: u8,
    pub bars: Vec<Vec<NoteEvent>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PianoRollError {
    #[error("expected {expected} density levels, found {found}")]
    DensityCount { expected: usize, found: usize },
    #[error("density level {0} out of range")]
    Density(u8),
    #[error("track {track} has {found} bars but n_bars is {expected}")]
    BarCount { track: usize, found: usize, expected: usize },
    #[error(transparent)]
    Piece(#[from] PieceError),
}

impl PianoRoll {
    /// Events are listed in canonical order.
    pub fn from_piece(piece: &Piece, densities: &[u8]) -> Result<Self, PianoRollError> {
        if densities.len() != piece.n_tracks() {
            return Err(PianoRollError::DensityCount { expected: piece.n_tracks(), found: densities.len() });
        }
        let piece = piece.canonical();
        let tracks = piece
            .tracks()
            .iter()
            .zip(densities)
            .map(|(t, &density)| PianoRollTrack {
                instrument: t.instrument,
                density,
                bars: t.bars.iter().map(|b| b.events.clone()).collect(),
            })
            .collect();
        Ok(PianoRoll { n_bars: piece.n_bars(), tracks })
    }

    pub fn to_piece(&self) -> Result<(Piece, Vec<u8>), PianoRollError> {
        let mut tracks = Vec::with_capacity(self.tracks.len());
        let mut densities = Vec::with_capacity(self.tracks.len());
        for (i, t) in self.tracks.iter().enumerate() {
            if t.bars.len() != self.n_bars {
                return Err(PianoRollError::BarCount { track: i, found: t.bars.len(), expected: self.n_bars });
            }
            if t.density >= DENSITY_LEVELS {
                return Err(PianoRollError::Density(t.density));
            }
            tracks.push(QuantizedTrack::new(t.instrument, t.bars.iter().map(|b| Bar::new(b.clone())).collect()));
            densities.push(t.density);
        }
        let piece = if tracks.is_empty() { Piece::empty() } else { Piece::new(tracks)? };
        Ok((piece.canonical(), densities))
    }
}
