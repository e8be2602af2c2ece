//! Generation with small transformers trained to memorize their data.

use std::collections::HashMap;

use trackfill_core::codec::{decode, encode_barfill, encode_multitrack, BarSelection};
use trackfill_core::generate::{generate_tracks, inpaint_bars, resample_iteratively, SamplerParams, TrackRequest};
use trackfill_core::model::{train, ModelConfig, TrainOptions};
use trackfill_core::synth::{patterned_piece, toy_corpus};
use trackfill_core::{Piece, SequenceKind, TokenId, TokenSequence};

fn small_config(batch: usize, seed: u64) -> ModelConfig {
    ModelConfig { layers: 2, heads: 2, embed_dim: 48, window: 256, ff_dim: 96, learning_rate: 5e-3, batch, steps: 800, seed }
}

/// Top-p this small keeps only the most likely token.
fn greedy(seed: u64) -> SamplerParams {
    SamplerParams { top_p: 1e-9, seed, ..Default::default() }
}

#[test]
fn memorized_bar_is_regenerated() {
    let piece = patterned_piece(21, 2, 3);
    let sel = BarSelection::new([(1, 1), (0, 2)]);
    let seq = encode_barfill(&piece, &sel, &[5, 5]).unwrap().ids();
    let opts = TrainOptions { eval_every: 25, target_loss: Some(0.01) };
    let (m, _) = train(&small_config(1, 1), &[seq], &opts, |_, _| {}).unwrap();
    let g = inpaint_bars(&m, &piece, &[5, 5], &sel, &greedy(0)).unwrap();
    assert_eq!(g.piece, piece.canonical());
}

/// Shared (bar, pitch, onset) events over the larger of the two event counts.
fn similarity(a: &Piece, b: &Piece) -> f64 {
    let events = |p: &Piece| {
        let mut m: HashMap<(usize, u8, u8), usize> = HashMap::new();
        for t in p.tracks() {
            for (i, bar) in t.bars.iter().enumerate() {
                for e in &bar.events {
                    *m.entry((i, e.pitch, e.onset)).or_default() += 1;
                }
            }
        }
        m
    };
    let (ea, eb) = (events(a), events(b));
    let shared: usize = ea.iter().map(|(k, n)| (*n).min(eb.get(k).copied().unwrap_or(0))).sum();
    let size = ea.values().sum::<usize>().max(eb.values().sum::<usize>()).max(1);
    shared as f64 / size as f64
}

#[test]
fn resampling_stays_closer_to_the_input_than_fresh_generation() {
    // Training data comes in random track order, so the model sees both
    // orders of every piece.
    let pieces: Vec<(Piece, Vec<u8>)> = toy_corpus(6)
        .iter()
        .map(|ids| decode(&TokenSequence::from_ids(SequenceKind::MultiTrack, ids).unwrap()).unwrap())
        .collect();
    let corpus: Vec<Vec<TokenId>> = pieces
        .iter()
        .flat_map(|(p, d)| {
            [vec![0, 1], vec![1, 0]].map(|o| encode_multitrack(&p.select_tracks(&o), &[d[o[0]], d[o[1]]]).unwrap().ids())
        })
        .collect();
    let opts = TrainOptions { eval_every: 25, target_loss: Some(0.05) };
    let (m, _) = train(&small_config(corpus.len(), 2), &corpus, &opts, |_, _| {}).unwrap();

    let (mut resampled, mut fresh) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let (base, d) = &pieces[seed as usize % pieces.len()];
        let params = SamplerParams { seed, ..Default::default() };
        let r = resample_iteratively(&m, base, d, 1, &params).unwrap();
        let f = generate_tracks(&m, &Piece::empty(), &[], &vec![TrackRequest::default(); 2], Some(2), &params).unwrap();
        resampled += similarity(&r.piece, base);
        fresh += similarity(&f.piece, base);
    }
    let (resampled, fresh) = (resampled / seeds as f64, fresh / seeds as f64);
    assert!(resampled > fresh, "resampled {resampled:.3} vs fresh {fresh:.3}");
}
