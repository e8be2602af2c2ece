//! Deterministic random pieces for tests, benchmarks and the bundled corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::encode_multitrack;
use crate::piece::{Bar, Instrument, NoteEvent, Piece, QuantizedTrack};
use crate::vocab::TokenId;
use crate::BAR_LEN;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub max_tracks: usize,
    pub max_bars: usize,
    pub max_notes_per_bar: usize,
    /// Probability that a track is a drum track.
    pub drum_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { max_tracks: 12, max_bars: 8, max_notes_per_bar: 12, drum_rate: 0.1 }
    }
}

pub fn random_instrument<R: Rng>(rng: &mut R, drum_rate: f64) -> Instrument {
    if rng.random_bool(drum_rate) {
        Instrument::Drum
    } else {
        Instrument::Program(rng.random_range(0..128))
    }
}

/// Uniform-ish random bar: any pitch, onset and length, skipping notes that
/// would overlap an already placed note of the same pitch.
pub fn random_bar<R: Rng>(rng: &mut R, max_notes: usize) -> Bar {
    let n = rng.random_range(0..=max_notes);
    let mut events: Vec<NoteEvent> = Vec::with_capacity(n);
    for _ in 0..n {
        let pitch = rng.random_range(0..128u8);
        let onset = rng.random_range(0..BAR_LEN);
        let offset = rng.random_range(onset + 1..=BAR_LEN);
        if events.iter().all(|e| e.pitch != pitch || e.offset <= onset || offset <= e.onset) {
            events.push(NoteEvent::new(pitch, onset, offset));
        }
    }
    Bar::new(events)
}

/// A valid piece with 1..=max_tracks tracks and 1..=max_bars bars.
pub fn random_piece<R: Rng>(rng: &mut R, p: &SynthParams) -> Piece {
    let n_tracks = rng.random_range(1..=p.max_tracks.max(1));
    let n_bars = rng.random_range(1..=p.max_bars.max(1));
    let tracks = (0..n_tracks)
        .map(|_| {
            let inst = random_instrument(rng, p.drum_rate);
            QuantizedTrack::new(inst, (0..n_bars).map(|_| random_bar(rng, p.max_notes_per_bar)).collect())
        })
        .collect();
    Piece::new(tracks).expect("synthesized piece is valid")
}

pub fn random_densities<R: Rng>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..crate::DENSITY_LEVELS)).collect()
}

/// One-bar rhythmic/melodic cell, repeated with occasional variation.
fn patterned_track<R: Rng>(rng: &mut R, inst: Instrument, n_bars: usize) -> QuantizedTrack {
    let (low, high) = match inst {
        Instrument::Drum => (35u8, 52u8),
        Instrument::Program(p) if (32..40).contains(&p) => (28, 52),
        _ => (48, 84),
    };
    let step = [3u8, 6, 12, 24][rng.random_range(0..4)];
    let hold = if inst == Instrument::Drum { 1 } else { rng.random_range(1..=step) };
    let mut cell: Vec<NoteEvent> = (0..BAR_LEN / step)
        .filter_map(|i| rng.random_bool(0.7).then(|| NoteEvent::new(rng.random_range(low..high), i * step, i * step + hold)))
        .collect();
    // a track without notes would vanish on MIDI import
    if cell.is_empty() {
        cell.push(NoteEvent::new(rng.random_range(low..high), 0, hold));
    }
    let bars = (0..n_bars)
        .map(|_| {
            if rng.random_bool(0.2) {
                let shift = rng.random_range(0..5u8);
                Bar::new(cell.iter().map(|e| NoteEvent::new((e.pitch + shift).min(127), e.onset, e.offset)).collect())
            } else {
                Bar::new(cell.clone())
            }
        })
        .collect();
    QuantizedTrack::new(inst, bars)
}

/// A loop-based piece resembling simple arrangements: bass, chords, lead, drums.
pub fn patterned_piece(seed: u64, n_tracks: usize, n_bars: usize) -> Piece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let palette = [
        Instrument::Drum,
        Instrument::Program(33),
        Instrument::Program(0),
        Instrument::Program(25),
        Instrument::Program(48),
        Instrument::Program(73),
        Instrument::Program(81),
        Instrument::Program(4),
    ];
    let tracks = (0..n_tracks.max(1))
        .map(|i| {
            let inst = if i < palette.len() && rng.random_bool(0.7) {
                palette[i]
            } else {
                palette[rng.random_range(0..palette.len())]
            };
            patterned_track(&mut rng, inst, n_bars.max(1))
        })
        .collect();
    Piece::new(tracks).expect("patterned piece is valid")
}

/// The memorization corpus: the first `n` two-track, two-bar patterned
/// pieces (density level 5 throughout) whose encoding is 100 to 200 tokens
/// long. Returns token-id sequences.
pub fn toy_corpus(n: usize) -> Vec<Vec<TokenId>> {
    (0u64..)
        .map(|seed| patterned_piece(seed, 2, 2))
        .map(|p| encode_multitrack(&p, &[5, 5]).expect("valid piece").ids())
        .filter(|ids| (100..=200).contains(&ids.len()))
        .take(n)
        .collect()
}
