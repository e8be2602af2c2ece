//! Quantized musical content: piece → tracks → bars → note events.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::BAR_LEN;

/// The MIDI program a track is played with, or the percussion sentinel.
///
/// Serialized as an integer program `0..=127` or the string `"drum"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instrument {
    Program(u8),
    Drum,
}

impl Instrument {
    /// Number of distinct instruments, including [`Instrument::Drum`].
    pub const COUNT: usize = 129;

    /// Dense index: programs map to themselves, drums to 128.
    pub fn index(self) -> usize {
        match self {
            Instrument::Program(p) => p as usize,
            Instrument::Drum => 128,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0..=127 => Some(Instrument::Program(index as u8)),
            128 => Some(Instrument::Drum),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Instrument> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instrument::Program(p) => write!(f, "{p}"),
            Instrument::Drum => f.write_str("DRUM"),
        }
    }
}

impl std::str::FromStr for Instrument {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("drum") {
            return Ok(Instrument::Drum);
        }
        match s.parse::<u8>() {
            Ok(p) if p < 128 => Ok(Instrument::Program(p)),
            _ => Err(format!("invalid instrument `{s}` (expected 0-127 or drum)")),
        }
    }
}

impl Serialize for Instrument {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Instrument::Program(p) => serializer.serialize_u8(*p),
            Instrument::Drum => serializer.serialize_str("drum"),
        }
    }
}

impl<'de> Deserialize<'de> for Instrument {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl de::Visitor<'_> for Visitor {
            type Value = Instrument;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a MIDI program 0-127 or \"drum\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Instrument, E> {
                if v < 128 {
                    Ok(Instrument::Program(v as u8))
                } else {
                    Err(E::invalid_value(de::Unexpected::Unsigned(v), &self))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Instrument, E> {
                if (0..128).contains(&v) {
                    Ok(Instrument::Program(v as u8))
                } else {
                    Err(E::invalid_value(de::Unexpected::Signed(v), &self))
                }
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Instrument, E> {
                if v.eq_ignore_ascii_case("drum") {
                    Ok(Instrument::Drum)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}

/// A note inside one bar, in grid subdivisions: `0 <= onset < offset <= 48`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: u8,
    pub offset: u8,
}

impl NoteEvent {
    pub fn new(pitch: u8, onset: u8, offset: u8) -> Self {
        NoteEvent { pitch, onset, offset }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bar {
    pub events: Vec<NoteEvent>,
}

impl Bar {
    pub fn new(mut events: Vec<NoteEvent>) -> Self {
        events.sort_by_key(|e| (e.onset, e.pitch));
        Bar { events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of note onsets in the bar.
    pub fn onsets(&self) -> usize {
        self.events.len()
    }

    /// Events in canonical order (by onset, then pitch).
    pub fn canonical(&self) -> Bar {
        Bar::new(self.events.clone())
    }

    /// Checks the per-bar invariants.
    pub fn check(&self) -> Result<(), PieceError> {
        for e in &self.events {
            if e.pitch > 127 || e.onset >= e.offset || e.offset > BAR_LEN {
                return Err(PieceError::InvalidEvent(*e));
            }
        }
        let mut by_pitch = self.events.clone();
        by_pitch.sort_by_key(|e| (e.pitch, e.onset));
        for w in by_pitch.windows(2) {
            if w[0].pitch == w[1].pitch && w[1].onset < w[0].offset {
                return Err(PieceError::OverlappingNotes(w[0], w[1]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedTrack {
    pub instrument: Instrument,
    pub bars: Vec<Bar>,
}

impl QuantizedTrack {
    pub fn new(instrument: Instrument, bars: Vec<Bar>) -> Self {
        QuantizedTrack { instrument, bars }
    }

    pub fn empty(instrument: Instrument, n_bars: usize) -> Self {
        QuantizedTrack { instrument, bars: vec![Bar::default(); n_bars] }
    }

    pub fn note_count(&self) -> usize {
        self.bars.iter().map(Bar::onsets).sum()
    }

    /// Mean number of onsets per bar; zero for a track without bars.
    pub fn mean_onsets_per_bar(&self) -> f64 {
        if self.bars.is_empty() {
            0.0
        } else {
            self.note_count() as f64 / self.bars.len() as f64
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PieceError {
    #[error("a piece needs at least one track")]
    EmptyPiece,
    #[error("track {track} has {found} bars, expected {expected}")]
    BarCountMismatch { track: usize, found: usize, expected: usize },
    #[error("invalid note event {0:?}")]
    InvalidEvent(NoteEvent),
    #[error("overlapping notes of equal pitch: {0:?} and {1:?}")]
    OverlappingNotes(NoteEvent, NoteEvent),
}

/// A set of simultaneously sounding tracks sharing one bar grid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Piece {
    tracks: Vec<QuantizedTrack>,
    n_bars: usize,
}

impl Piece {
    /// A piece with no tracks; the starting point for unconditioned generation.
    pub fn empty() -> Self {
        Piece::default()
    }

    /// Builds a piece whose tracks already share a bar count.
    pub fn new(tracks: Vec<QuantizedTrack>) -> Result<Self, PieceError> {
        let n_bars = tracks.first().map_or(0, |t| t.bars.len());
        let piece = Piece { tracks, n_bars };
        piece.check()?;
        Ok(piece)
    }

    pub fn tracks(&self) -> &[QuantizedTrack] {
        &self.tracks
    }

    pub fn n_bars(&self) -> usize {
        self.n_bars
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn into_tracks(self) -> Vec<QuantizedTrack> {
        self.tracks
    }

    pub fn check(&self) -> Result<(), PieceError> {
        for (i, t) in self.tracks.iter().enumerate() {
            if t.bars.len() != self.n_bars {
                return Err(PieceError::BarCountMismatch {
                    track: i,
                    found: t.bars.len(),
                    expected: self.n_bars,
                });
            }
            for bar in &t.bars {
                bar.check()?;
            }
        }
        Ok(())
    }

    /// Same content with every bar's events in canonical order.
    pub fn canonical(&self) -> Piece {
        Piece {
            tracks: self
                .tracks
                .iter()
                .map(|t| QuantizedTrack {
                    instrument: t.instrument,
                    bars: t.bars.iter().map(Bar::canonical).collect(),
                })
                .collect(),
            n_bars: self.n_bars,
        }
    }

    /// Keeps only the tracks at the given indices, in the given order.
    pub fn select_tracks(&self, indices: &[usize]) -> Piece {
        Piece {
            tracks: indices.iter().map(|&i| self.tracks[i].clone()).collect(),
            n_bars: if indices.is_empty() { 0 } else { self.n_bars },
        }
    }

    /// Keeps bars `start..start + len` of every track.
    pub fn bar_window(&self, start: usize, len: usize) -> Piece {
        Piece {
            tracks: self
                .tracks
                .iter()
                .map(|t| QuantizedTrack {
                    instrument: t.instrument,
                    bars: t.bars[start..start + len].to_vec(),
                })
                .collect(),
            n_bars: len,
        }
    }

    pub fn with_track_replaced(&self, index: usize, track: QuantizedTrack) -> Result<Piece, PieceError> {
        let mut tracks = self.tracks.clone();
        tracks[index] = track;
        Piece::new(tracks)
    }
}

/// Pads every track with empty bars up to the longest track.
pub fn assemble_piece(mut tracks: Vec<QuantizedTrack>) -> Result<Piece, PieceError> {
    if tracks.is_empty() {
        return Err(PieceError::EmptyPiece);
    }
    let n_bars = tracks.iter().map(|t| t.bars.len()).max().unwrap_or(0);
    for t in &mut tracks {
        t.bars.resize_with(n_bars, Bar::default);
    }
    Piece::new(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bars(n: usize) -> Vec<Bar> {
        vec![Bar::default(); n]
    }

    #[test]
    fn pads_to_longest_track() {
        let piece = assemble_piece(vec![
            QuantizedTrack::new(Instrument::Program(0), bars(3)),
            QuantizedTrack::new(Instrument::Program(1), bars(5)),
        ])
        .unwrap();
        assert_eq!(piece.n_bars(), 5);
        assert_eq!(piece.tracks()[0].bars.len(), 5);
    }

    #[test]
    fn single_track_keeps_bar_count() {
        let piece = assemble_piece(vec![QuantizedTrack::new(Instrument::Drum, bars(7))]).unwrap();
        assert_eq!(piece.n_bars(), 7);
    }

    #[test]
    fn zero_tracks_is_an_error() {
        assert_eq!(assemble_piece(vec![]), Err(PieceError::EmptyPiece));
    }

    #[test]
    fn rejects_overlapping_equal_pitch() {
        let bar = Bar::new(vec![NoteEvent::new(60, 0, 24), NoteEvent::new(60, 12, 36)]);
        assert!(matches!(bar.check(), Err(PieceError::OverlappingNotes(..))));
        let ok = Bar::new(vec![NoteEvent::new(60, 0, 12), NoteEvent::new(60, 12, 36)]);
        assert!(ok.check().is_ok());
    }

    #[test]
    fn instrument_json_forms() {
        let v: Vec<Instrument> = serde_json::from_str(r#"[0, 127, "drum"]"#).unwrap();
        assert_eq!(v, vec![Instrument::Program(0), Instrument::Program(127), Instrument::Drum]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[0,127,"drum"]"#);
        assert!(serde_json::from_str::<Instrument>("128").is_err());
    }
}
