//! MIDI input and output.
//!
//! `bytes → parse_midi → extract_tracks → quantize → assemble_piece`, with
//! [`piece_from_midi`] running the whole chain and [`piece_to_midi`] going
//! back to a playable file.

mod extract;
mod ir;
mod parse;
mod quantize;
mod write;

use thiserror::Error;

pub use extract::extract_tracks;
pub use ir::{MidiFileIR, MidiMessage, RawNote, RawTrack, SmfFormat};
pub use parse::parse_midi;
pub use quantize::{quantize, restrict_to_quadruple, BarMap, BarSpan};
pub use write::{
    piece_to_ir, piece_to_midi, write_midi, DRUM_CHANNEL, EXPORT_MICROS_PER_BEAT, EXPORT_TICKS_PER_BEAT,
    EXPORT_VELOCITY,
};

use crate::piece::{assemble_piece, Piece};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed MIDI file: {0}")]
    Malformed(String),
    #[error("unsupported MIDI format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedDivision,
    #[error("bar {bar} is not in 4/4")]
    NonQuadrupleMeter { bar: usize },
    #[error("tick {0} lies outside the bar map")]
    OutsideBarMap(u64),
    #[error("file contains no notes in 4/4 bars")]
    NoQuadrupleContent,
}

impl MidiError {
    /// True for files that parse but cannot be represented.
    pub fn is_unrepresentable(&self) -> bool {
        matches!(
            self,
            MidiError::UnsupportedFormat(_) | MidiError::UnsupportedDivision | MidiError::NoQuadrupleContent
        )
    }
}

/// Tracks of a parsed file quantized onto its 4/4 bars; tracks left without
/// notes after dropping other meters are removed. The file extends to its
/// last note-off or its latest end-of-track event, whichever is later.
pub fn quantize_file(ir: &MidiFileIR) -> Result<Piece, MidiError> {
    let raw = extract_tracks(ir);
    let end = raw
        .iter()
        .flat_map(|t| t.notes.iter().map(|n| n.offset_tick))
        .max()
        .unwrap_or(0)
        .max(ir.end_of_track_tick());
    let map = BarMap::from_ir(ir, end);
    let mut tracks = Vec::new();
    for track in &raw {
        let kept = restrict_to_quadruple(track, &map);
        if kept.notes.is_empty() {
            continue;
        }
        tracks.push(quantize(&kept, ir.ticks_per_beat, &map)?);
    }
    if tracks.is_empty() || map.quadruple_count() == 0 {
        return Err(MidiError::NoQuadrupleContent);
    }
    assemble_piece(tracks).map_err(|_| MidiError::NoQuadrupleContent)
}

pub fn piece_from_midi(bytes: &[u8]) -> Result<Piece, MidiError> {
    quantize_file(&parse_midi(bytes)?)
}
