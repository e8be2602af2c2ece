//! Reading MIDI corpora from disk, and the synthetic corpus bundled under
//! `data/corpus`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackfill_core::midi::{piece_from_midi, piece_to_ir, write_midi, MidiFileIR, MidiMessage, SmfFormat};
use trackfill_core::synth::{patterned_piece, random_piece, SynthParams};
use trackfill_core::Piece;
use walkdir::WalkDir;

/// Files under a corpus directory, split into imported pieces and failures.
#[derive(Debug, Default)]
pub struct Corpus {
    pub pieces: Vec<(PathBuf, Piece)>,
    pub failed: Vec<(PathBuf, String)>,
}

impl Corpus {
    pub fn files(&self) -> usize {
        self.pieces.len() + self.failed.len()
    }

    pub fn just_pieces(&self) -> Vec<Piece> {
        self.pieces.iter().map(|(_, p)| p.clone()).collect()
    }
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// Imports every `.mid`/`.midi` file below `dir`, in path order. Files that
/// fail to parse or hold no 4/4 content are listed in `failed`.
pub fn load_corpus(dir: &Path) -> std::io::Result<Corpus> {
    let mut corpus = Corpus::default();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let path = entry.path();
        if !entry.file_type().is_file() || !is_midi(path) {
            continue;
        }
        let bytes = std::fs::read(path)?;
        match piece_from_midi(&bytes) {
            Ok(p) => corpus.pieces.push((path.to_path_buf(), p)),
            Err(e) => corpus.failed.push((path.to_path_buf(), e.to_string())),
        }
    }
    Ok(corpus)
}

fn set_tick(m: &mut MidiMessage, value: u64) {
    match m {
        MidiMessage::NoteOn { tick, .. }
        | MidiMessage::NoteOff { tick, .. }
        | MidiMessage::ProgramChange { tick, .. }
        | MidiMessage::TimeSignature { tick, .. }
        | MidiMessage::Tempo { tick, .. }
        | MidiMessage::EndOfTrack { tick }
        | MidiMessage::Other { tick } => *tick = value,
    }
}

/// Splices a 3/4 bar with a few notes in front of bar `at`. The bar is
/// dropped again on import, so the file still quantizes to the same piece.
fn insert_three_four_bar(ir: &mut MidiFileIR, at: u64, rng: &mut ChaCha8Rng) {
    let beat = u64::from(ir.ticks_per_beat);
    let boundary = at * 4 * beat;
    let extra = 3 * beat;
    for chunk in &mut ir.track_chunks {
        for m in chunk.iter_mut() {
            let t = m.tick();
            // note-offs on the bar line still end the previous bar
            let moves = match m {
                MidiMessage::NoteOff { .. } => t > boundary,
                _ => t >= boundary,
            };
            if moves {
                set_tick(m, t + extra);
            }
        }
    }
    ir.track_chunks[0].push(MidiMessage::TimeSignature { tick: boundary, numerator: 3, denominator_pow2: 2 });
    ir.track_chunks[0].push(MidiMessage::TimeSignature { tick: boundary + extra, numerator: 4, denominator_pow2: 2 });
    if let Some(chunk) = ir.track_chunks.get_mut(1) {
        let channel = chunk
            .iter()
            .find_map(|m| match *m {
                MidiMessage::NoteOn { channel, .. } | MidiMessage::ProgramChange { channel, .. } => Some(channel),
                _ => None,
            })
            .unwrap_or(0);
        for beat_i in 0..3 {
            let tick = boundary + beat_i * beat;
            let pitch = rng.random_range(48..72);
            chunk.push(MidiMessage::NoteOn { tick, channel, pitch, velocity: 80 });
            chunk.push(MidiMessage::NoteOff { tick: tick + beat / 2, channel, pitch });
        }
    }
}

fn to_single_track(ir: &mut MidiFileIR) {
    let end = ir.end_of_track_tick();
    let mut merged: Vec<MidiMessage> =
        ir.track_chunks.drain(..).flatten().filter(|m| !matches!(m, MidiMessage::EndOfTrack { .. })).collect();
    merged.sort_by_key(MidiMessage::tick);
    merged.push(MidiMessage::EndOfTrack { tick: end });
    ir.track_chunks = vec![merged];
    ir.format = SmfFormat::SingleTrack;
}

fn rescale(ir: &mut MidiFileIR, ticks_per_beat: u16) {
    let (from, to) = (u64::from(ir.ticks_per_beat), u64::from(ticks_per_beat));
    for m in ir.track_chunks.iter_mut().flatten() {
        let t = m.tick();
        set_tick(m, t * to / from);
    }
    ir.ticks_per_beat = ticks_per_beat;
}

/// One file of the bundled corpus: its name, SMF bytes and the piece it
/// was rendered from.
pub fn bundled_file(seed: u64, index: usize) -> (String, Vec<u8>, Piece) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(index as u64));
    let n_tracks = if rng.random_bool(0.3) { rng.random_range(6..=12) } else { rng.random_range(1..=6) };
    let n_bars = rng.random_range(4..=24);
    let piece = if index % 6 == 5 {
        let p = SynthParams { max_tracks: n_tracks, max_bars: n_bars, max_notes_per_bar: 16, drum_rate: 0.15 };
        random_piece(&mut rng, &p)
    } else {
        patterned_piece(rng.random(), n_tracks, n_bars)
    };
    let mut ir = piece_to_ir(&piece);
    let mut tags = Vec::new();
    if index % 7 == 3 && piece.n_bars() >= 2 {
        insert_three_four_bar(&mut ir, piece.n_bars() as u64 / 2, &mut rng);
        tags.push("meter");
    }
    if index % 5 == 2 {
        rescale(&mut ir, 96);
        tags.push("ppq96");
    }
    if index % 4 == 1 {
        to_single_track(&mut ir);
        tags.push("type0");
    }
    let mut name = format!("{index:03}");
    for t in tags {
        name.push('_');
        name.push_str(t);
    }
    name.push_str(".mid");
    (name, write_midi(&ir), piece)
}

pub const BUNDLED_SEED: u64 = 2020;
pub const BUNDLED_FILES: usize = 48;

/// Writes `count` bundled files into `dir`, returning their paths.
pub fn write_bundled_corpus(dir: &Path, seed: u64, count: usize) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let (name, bytes, _) = bundled_file(seed, i);
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            Ok(path)
        })
        .collect()
}

/// Location of the corpus checked into the repository.
pub fn bundled_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus")
}
