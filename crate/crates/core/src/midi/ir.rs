use serde::{Deserialize, Serialize};

use crate::piece::Instrument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmfFormat {
    /// A single track chunk.
    SingleTrack,
    /// Several simultaneously played track chunks.
    MultiTrack,
}

/// One message with its absolute tick position inside its chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MidiMessage {
    NoteOn { tick: u64, channel: u8, pitch: u8, velocity: u8 },
    NoteOff { tick: u64, channel: u8, pitch: u8 },
    ProgramChange { tick: u64, channel: u8, program: u8 },
    TimeSignature { tick: u64, numerator: u8, denominator_pow2: u8 },
    /// Tempo (microseconds per beat); carried for export and debugging only.
    Tempo { tick: u64, micros_per_beat: u32 },
    /// End-of-track meta event; marks the intended length of the chunk.
    EndOfTrack { tick: u64 },
    Other { tick: u64 },
}

impl MidiMessage {
    pub fn tick(&self) -> u64 {
        match *self {
            MidiMessage::NoteOn { tick, .. }
            | MidiMessage::NoteOff { tick, .. }
            | MidiMessage::ProgramChange { tick, .. }
            | MidiMessage::TimeSignature { tick, .. }
            | MidiMessage::Tempo { tick, .. }
            | MidiMessage::EndOfTrack { tick }
            | MidiMessage::Other { tick } => tick,
        }
    }
}

/// A parsed Standard MIDI File with absolute ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiFileIR {
    pub format: SmfFormat,
    pub ticks_per_beat: u16,
    pub track_chunks: Vec<Vec<MidiMessage>>,
}

impl MidiFileIR {
    /// Latest end-of-track tick of any chunk.
    pub fn end_of_track_tick(&self) -> u64 {
        self.track_chunks
            .iter()
            .flatten()
            .filter_map(|m| match *m {
                MidiMessage::EndOfTrack { tick } => Some(tick),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Tick of the last note-off (or note-on) in any chunk.
    pub fn last_note_tick(&self) -> u64 {
        self.track_chunks
            .iter()
            .flatten()
            .filter_map(|m| match *m {
                MidiMessage::NoteOn { tick, .. } | MidiMessage::NoteOff { tick, .. } => Some(tick),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNote {
    pub pitch: u8,
    pub onset_tick: u64,
    pub offset_tick: u64,
}

/// All notes found on one track chunk, one channel and one instrument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTrack {
    pub instrument: Instrument,
    pub channel: u8,
    pub chunk_index: usize,
    pub notes: Vec<RawNote>,
}
