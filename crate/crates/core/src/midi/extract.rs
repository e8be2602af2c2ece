use std::collections::{HashMap, VecDeque};

use super::ir::{MidiFileIR, MidiMessage, RawNote, RawTrack};
use super::write::DRUM_CHANNEL;
use crate::piece::Instrument;

/// Splits every chunk into one track per (instrument, channel) pair.
///
/// Program state starts at 0 on every channel of every chunk. A note belongs
/// to the instrument active at its note-on; note-offs close the oldest open
/// note of the same channel and pitch. Channel 9 is percussion and maps to
/// [`Instrument::Drum`]. Tracks are ordered by chunk, then by first note.
pub fn extract_tracks(ir: &MidiFileIR) -> Vec<RawTrack> {
    let mut out = Vec::new();
    for (chunk_index, chunk) in ir.track_chunks.iter().enumerate() {
        let mut program = [0u8; 16];
        let mut tracks: Vec<RawTrack> = Vec::new();
        let mut track_of: HashMap<(Instrument, u8), usize> = HashMap::new();
        // Pending note-ons per (channel, pitch): (track, note index).
        let mut open: HashMap<(u8, u8), VecDeque<(usize, usize)>> = HashMap::new();
        let mut last_tick = 0;

        for msg in chunk {
            last_tick = last_tick.max(msg.tick());
            match *msg {
                MidiMessage::ProgramChange { channel, program: p, .. } => program[channel as usize] = p,
                MidiMessage::NoteOn { tick, channel, pitch, .. } => {
                    let instrument = if channel == DRUM_CHANNEL {
                        Instrument::Drum
                    } else {
                        Instrument::Program(program[channel as usize])
                    };
                    let t = *track_of.entry((instrument, channel)).or_insert_with(|| {
                        tracks.push(RawTrack { instrument, channel, chunk_index, notes: Vec::new() });
                        tracks.len() - 1
                    });
                    tracks[t].notes.push(RawNote { pitch, onset_tick: tick, offset_tick: u64::MAX });
                    open.entry((channel, pitch)).or_default().push_back((t, tracks[t].notes.len() - 1));
                }
                MidiMessage::NoteOff { tick, channel, pitch } => {
                    if let Some((t, n)) = open.get_mut(&(channel, pitch)).and_then(VecDeque::pop_front) {
                        let note = &mut tracks[t].notes[n];
                        note.offset_tick = tick.max(note.onset_tick + 1);
                    }
                }
                _ => {}
            }
        }
        // Notes never switched off end with the chunk.
        for queue in open.values() {
            for &(t, n) in queue {
                let note = &mut tracks[t].notes[n];
                note.offset_tick = last_tick.max(note.onset_tick + 1);
            }
        }
        out.extend(tracks);
    }
    out
}
