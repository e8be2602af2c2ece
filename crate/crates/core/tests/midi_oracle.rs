//! SMF reading checked against an independent reader.
//!
//! `fixtures/*.mido.json` hold what the Python `mido` package reports for
//! the neighbouring `.mid` files (absolute ticks, velocity-0 note-ons shown
//! as note-offs). The quantized pieces below were worked out by hand.

use std::path::Path;

use serde_json::{json, Value};
use trackfill_core::midi::{extract_tracks, parse_midi, piece_from_midi, piece_to_midi, MidiMessage};
use trackfill_core::{Bar, Instrument, NoteEvent, Piece, QuantizedTrack};

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

fn as_oracle_json(m: &MidiMessage) -> Value {
    match *m {
        MidiMessage::NoteOn { tick, channel, pitch, velocity } => {
            json!({"kind": "note_on", "tick": tick, "channel": channel, "pitch": pitch, "velocity": velocity})
        }
        MidiMessage::NoteOff { tick, channel, pitch } => {
            json!({"kind": "note_off", "tick": tick, "channel": channel, "pitch": pitch})
        }
        MidiMessage::ProgramChange { tick, channel, program } => {
            json!({"kind": "program_change", "tick": tick, "channel": channel, "program": program})
        }
        MidiMessage::TimeSignature { tick, numerator, denominator_pow2 } => {
            json!({"kind": "time_signature", "tick": tick, "numerator": numerator, "denominator": 1u32 << denominator_pow2})
        }
        MidiMessage::Tempo { tick, micros_per_beat } => json!({"kind": "tempo", "tick": tick, "micros_per_beat": micros_per_beat}),
        MidiMessage::EndOfTrack { tick } => json!({"kind": "end_of_track", "tick": tick}),
        MidiMessage::Other { tick } => json!({"kind": "other", "tick": tick}),
    }
}

fn check_against_oracle(name: &str) {
    let ir = parse_midi(&fixture(&format!("{name}.mid"))).unwrap();
    let oracle: Value = serde_json::from_slice(&fixture(&format!("{name}.mido.json"))).unwrap();
    let format = match ir.format {
        trackfill_core::midi::SmfFormat::SingleTrack => 0,
        trackfill_core::midi::SmfFormat::MultiTrack => 1,
    };
    assert_eq!(oracle["type"], json!(format));
    assert_eq!(oracle["ticks_per_beat"], json!(ir.ticks_per_beat));
    let ours: Vec<Vec<Value>> = ir.track_chunks.iter().map(|c| c.iter().map(as_oracle_json).collect()).collect();
    let theirs: Vec<Vec<Value>> = serde_json::from_value(oracle["tracks"].clone()).unwrap();
    assert_eq!(ours, theirs);
}

#[test]
fn type1_messages_match_oracle() {
    check_against_oracle("type1");
}

#[test]
fn type0_messages_match_oracle() {
    check_against_oracle("type0");
}

fn bar(events: &[(u8, u8, u8)]) -> Bar {
    Bar::new(events.iter().map(|&(p, on, off)| NoteEvent::new(p, on, off)).collect())
}

#[test]
fn type1_quantizes_to_hand_derived_piece() {
    // 96 ticks per beat -> 8 ticks per subdivision; a 3/4 bar starts at tick
    // 768 where the conductor track also ends, so only two 4/4 bars remain.
    let piece = piece_from_midi(&fixture("type1.mid")).unwrap();
    let expected = Piece::new(vec![
        QuantizedTrack::new(Instrument::Program(5), vec![bar(&[(60, 0, 12), (64, 6, 12)]), bar(&[])]),
        // 120..220 ticks = 15..27.5 subdivisions; the half rounds up.
        QuantizedTrack::new(Instrument::Program(34), vec![bar(&[(60, 15, 28)]), bar(&[])]),
        QuantizedTrack::new(Instrument::Drum, vec![bar(&[(36, 0, 2), (38, 12, 24), (42, 12, 24)]), bar(&[])]),
    ])
    .unwrap();
    assert_eq!(piece, expected);
}

#[test]
fn type0_quantizes_to_hand_derived_piece() {
    // 480 ticks per beat -> 40 per subdivision. The held note lasts 21920
    // ticks = 548 subdivisions = 11 bars + 20, and is split at every bar line.
    let piece = piece_from_midi(&fixture("type0.mid")).unwrap();
    let mut long: Vec<Bar> = (0..11).map(|_| bar(&[(72, 0, 48)])).collect();
    long.push(bar(&[(72, 0, 20)]));
    let mut bass = vec![bar(&[(40, 0, 48)])];
    bass.extend((0..11).map(|_| bar(&[])));
    let expected = Piece::new(vec![
        QuantizedTrack::new(Instrument::Program(33), bass),
        QuantizedTrack::new(Instrument::Program(0), long),
    ])
    .unwrap();
    assert_eq!(piece, expected);
}

fn smf(chunks: &[&[u8]]) -> Vec<u8> {
    let mut v = b"MThd".to_vec();
    v.extend(6u32.to_be_bytes());
    v.extend(1u16.to_be_bytes());
    v.extend((chunks.len() as u16).to_be_bytes());
    v.extend(96u16.to_be_bytes());
    for c in chunks {
        v.extend(b"MTrk");
        v.extend((c.len() as u32).to_be_bytes());
        v.extend(*c);
    }
    v
}

#[test]
fn worked_track_example() {
    // F = {t1, t2}: t1 holds one note on channel 0 with instrument 0; t2 holds
    // one note on channel 3 with instrument 0 and one after a change to 34.
    let t1: &[u8] = &[0x00, 0x90, 60, 100, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00];
    let t2: &[u8] = &[
        0x00, 0x93, 62, 100, 0x60, 0x83, 62, 0, 0x00, 0xc3, 34, 0x00, 0x93, 64, 100, 0x60, 0x83, 64, 0, 0x00, 0xff,
        0x2f, 0x00,
    ];
    let ir = parse_midi(&smf(&[t1, t2])).unwrap();
    let tracks: Vec<(Instrument, u8, usize)> =
        extract_tracks(&ir).iter().map(|t| (t.instrument, t.channel, t.chunk_index + 1)).collect();
    assert_eq!(
        tracks,
        vec![(Instrument::Program(0), 0, 1), (Instrument::Program(0), 3, 2), (Instrument::Program(34), 3, 2)]
    );
}

#[test]
fn export_import_is_a_fixpoint() {
    for name in ["type1.mid", "type0.mid"] {
        let piece = piece_from_midi(&fixture(name)).unwrap();
        let again = piece_from_midi(&piece_to_midi(&piece)).unwrap();
        assert_eq!(again, piece, "{name}");
    }
}
