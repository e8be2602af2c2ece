//! SMF writer and piece export.

use super::ir::{MidiFileIR, MidiMessage, SmfFormat};
use crate::piece::{Instrument, Piece};
use crate::SUBDIVISIONS_PER_BEAT;

/// Ticks per beat used for exported files (40 ticks per grid subdivision).
pub const EXPORT_TICKS_PER_BEAT: u16 = 480;
/// Exported tempo: 120 BPM.
pub const EXPORT_MICROS_PER_BEAT: u32 = 500_000;
pub const EXPORT_VELOCITY: u8 = 96;
pub const DRUM_CHANNEL: u8 = 9;

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Serializes an IR to SMF bytes. Messages of a chunk are written in tick
/// order (stable for equal ticks); `Other` messages are dropped and the
/// end-of-track event goes at the latest `EndOfTrack` tick, if any.
pub fn write_midi(ir: &MidiFileIR) -> Vec<u8> {
    let mut out = b"MThd".to_vec();
    out.extend(6u32.to_be_bytes());
    let format: u16 = match ir.format {
        SmfFormat::SingleTrack => 0,
        SmfFormat::MultiTrack => 1,
    };
    out.extend(format.to_be_bytes());
    out.extend((ir.track_chunks.len() as u16).to_be_bytes());
    out.extend(ir.ticks_per_beat.to_be_bytes());

    for chunk in &ir.track_chunks {
        let mut msgs: Vec<&MidiMessage> = chunk.iter().collect();
        msgs.sort_by_key(|m| m.tick());
        let mut body = Vec::new();
        let mut last = 0u64;
        for m in msgs {
            let bytes: Vec<u8> = match *m {
                MidiMessage::NoteOn { channel, pitch, velocity, .. } => vec![0x90 | channel, pitch, velocity],
                MidiMessage::NoteOff { channel, pitch, .. } => vec![0x80 | channel, pitch, 0],
                MidiMessage::ProgramChange { channel, program, .. } => vec![0xc0 | channel, program],
                MidiMessage::TimeSignature { numerator, denominator_pow2, .. } => {
                    vec![0xff, 0x58, 0x04, numerator, denominator_pow2, 24, 8]
                }
                MidiMessage::Tempo { micros_per_beat, .. } => {
                    let b = micros_per_beat.to_be_bytes();
                    vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]
                }
                MidiMessage::Other { .. } | MidiMessage::EndOfTrack { .. } => continue,
            };
            push_vlq(&mut body, (m.tick() - last) as u32);
            last = m.tick();
            body.extend(bytes);
        }
        let end = chunk
            .iter()
            .filter_map(|m| match *m {
                MidiMessage::EndOfTrack { tick } => Some(tick),
                _ => None,
            })
            .max()
            .unwrap_or(last)
            .max(last);
        push_vlq(&mut body, (end - last) as u32);
        body.extend([0xff, 0x2f, 0x00]);
        out.extend(b"MTrk");
        out.extend((body.len() as u32).to_be_bytes());
        out.extend(body);
    }
    out
}

/// Renders a piece as a format-1 file: a conductor chunk (120 BPM, 4/4) and
/// one chunk per track. Drums play on channel 9; other tracks get channels
/// in turn, skipping 9. Every chunk ends at the end of the last bar so that
/// trailing empty bars survive a round trip.
pub fn piece_to_ir(piece: &Piece) -> MidiFileIR {
    let ticks_per_sub = u64::from(EXPORT_TICKS_PER_BEAT) / u64::from(SUBDIVISIONS_PER_BEAT);
    let bar_ticks = ticks_per_sub * u64::from(crate::BAR_LEN);
    let end = MidiMessage::EndOfTrack { tick: piece.n_bars() as u64 * bar_ticks };
    let mut chunks = vec![vec![
        MidiMessage::Tempo { tick: 0, micros_per_beat: EXPORT_MICROS_PER_BEAT },
        MidiMessage::TimeSignature { tick: 0, numerator: 4, denominator_pow2: 2 },
        end,
    ]];
    let mut next_channel = 0u8;
    for track in piece.tracks() {
        let mut msgs = Vec::new();
        let channel = match track.instrument {
            Instrument::Drum => DRUM_CHANNEL,
            Instrument::Program(program) => {
                let ch = next_channel;
                next_channel = (next_channel + 1) % 16;
                if next_channel == DRUM_CHANNEL {
                    next_channel += 1;
                }
                msgs.push(MidiMessage::ProgramChange { tick: 0, channel: ch, program });
                ch
            }
        };
        // (tick, is_on, pitch): offs sort before ons at equal ticks so that
        // re-reading pairs a split note's halves correctly.
        let mut events = Vec::new();
        for (b, bar) in track.bars.iter().enumerate() {
            let base = b as u64 * bar_ticks;
            for e in &bar.events {
                events.push((base + u64::from(e.onset) * ticks_per_sub, true, e.pitch));
                events.push((base + u64::from(e.offset) * ticks_per_sub, false, e.pitch));
            }
        }
        events.sort();
        for (tick, on, pitch) in events {
            msgs.push(if on {
                MidiMessage::NoteOn { tick, channel, pitch, velocity: EXPORT_VELOCITY }
            } else {
                MidiMessage::NoteOff { tick, channel, pitch }
            });
        }
        msgs.push(end);
        chunks.push(msgs);
    }
    MidiFileIR {
        format: SmfFormat::MultiTrack,
        ticks_per_beat: EXPORT_TICKS_PER_BEAT,
        track_chunks: chunks,
    }
}

pub fn piece_to_midi(piece: &Piece) -> Vec<u8> {
    write_midi(&piece_to_ir(piece))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vlq_encoding() {
        for (value, expected) in [
            (0u32, vec![0x00]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x3fff, vec![0xff, 0x7f]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            push_vlq(&mut out, value);
            assert_eq!(out, expected, "{value:#x}");
        }
    }
}
