use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackfill_core::codec::{encode_multitrack, validate, BarSelection};
use trackfill_core::generate::{
    generate, generate_tracks, inpaint_bars, resample_iteratively, GenerateError, GenerationMode, GenerationRequest,
    SamplerParams, TrackRequest,
};
use trackfill_core::model::{NGramModel, SequencePredictor, UniformPredictor};
use trackfill_core::synth::{patterned_piece, random_piece, SynthParams};
use trackfill_core::{Instrument, Piece, Token};

fn small_piece(rng: &mut ChaCha8Rng) -> Piece {
    random_piece(rng, &SynthParams { max_tracks: 3, max_bars: 3, max_notes_per_bar: 6, drum_rate: 0.2 })
}

fn count(tokens: &[Token], t: Token) -> usize {
    tokens.iter().filter(|&&x| x == t).count()
}

#[test]
fn uniform_predictor_output_always_validates() {
    let u = UniformPredictor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for run in 0..150u64 {
        let base = small_piece(&mut rng);
        let d = vec![3; base.n_tracks()];
        let params = SamplerParams { seed: run, ..Default::default() };
        let g = if run % 2 == 0 {
            generate_tracks(&u, &base, &d, &[TrackRequest::default()], None, &params).unwrap()
        } else {
            let cell = (rng.random_range(0..base.n_tracks()), rng.random_range(0..base.n_bars()));
            if base.n_tracks() * base.n_bars() == 1 {
                continue;
            }
            inpaint_bars(&u, &base, &d, &BarSelection::new([cell]), &params).unwrap()
        };
        assert!(validate(&g.sequence).is_empty(), "run {run}: {:?}", validate(&g.sequence));
    }
}

#[test]
fn stop_after_exactly_n_end_tokens() {
    let u = UniformPredictor::default();
    let base = patterned_piece(3, 2, 2);
    for n in 1..=3 {
        let reqs = vec![TrackRequest::default(); n];
        let g = generate_tracks(&u, &base, &[1, 1], &reqs, None, &SamplerParams { seed: n as u64, ..Default::default() })
            .unwrap();
        assert_eq!(count(g.new_tokens(), Token::TrackEnd), n);
        assert_eq!(g.piece.n_tracks(), 2 + n);
        assert_eq!(g.piece.n_bars(), 2);

        let sel = BarSelection::new((0..n).map(|i| (i % 2, i / 2)));
        let g = inpaint_bars(&u, &base, &[1, 1], &sel, &SamplerParams { seed: n as u64, ..Default::default() }).unwrap();
        assert_eq!(count(g.new_tokens(), Token::FillEnd), n);
        assert_eq!(*g.new_tokens().last().unwrap(), Token::FillEnd);
    }
}

#[test]
fn conditioning_is_left_untouched() {
    let u = UniformPredictor::default();
    let base = patterned_piece(8, 3, 4);
    let d = vec![2, 5, 7];
    let g = generate_tracks(&u, &base, &d, &[TrackRequest::default()], None, &SamplerParams::default()).unwrap();
    let context = encode_multitrack(&base, &d).unwrap();
    assert_eq!(&g.sequence.tokens[..context.len()], &context.tokens[..]);
    assert_eq!(&g.piece.tracks()[..3], base.canonical().tracks());
    assert_eq!(&g.densities[..3], &d[..]);

    let sel = BarSelection::new([(1, 2), (0, 0)]);
    let g = inpaint_bars(&u, &base, &d, &sel, &SamplerParams { seed: 4, ..Default::default() }).unwrap();
    for (t, track) in base.canonical().tracks().iter().enumerate() {
        for (b, bar) in track.bars.iter().enumerate() {
            if !sel.contains(t, b) {
                assert_eq!(&g.piece.tracks()[t].bars[b], bar, "({t},{b})");
            }
        }
        assert_eq!(g.piece.tracks()[t].instrument, track.instrument);
    }
    assert_eq!(g.densities, d);
}

#[test]
fn instrument_and_density_are_forced() {
    let u = UniformPredictor::default();
    let base = patterned_piece(1, 1, 2);
    for seed in 0..30 {
        let req = TrackRequest { allowed_instruments: Some(vec![Instrument::Program(30), Instrument::Drum]), density: Some(6) };
        let g = generate_tracks(&u, &base, &[0], &[req], None, &SamplerParams { seed, ..Default::default() }).unwrap();
        let inst = g.piece.tracks()[1].instrument;
        assert!(inst == Instrument::Program(30) || inst == Instrument::Drum);
        assert_eq!(g.densities[1], 6);
    }
}

#[test]
fn same_seed_same_output() {
    let corpus: Vec<Vec<u16>> = (0..20).map(|s| encode_multitrack(&patterned_piece(s, 2, 2), &[4, 4]).unwrap().ids()).collect();
    let ngram = NGramModel::fit(4, NGramModel::DEFAULT_ALPHA, corpus.iter().map(Vec::as_slice)).unwrap();
    let base = patterned_piece(100, 2, 2);
    let req = GenerationRequest {
        mode: GenerationMode::TrackInpaint { tracks: vec![TrackRequest::default()], max_bars: None },
        sampler: SamplerParams { temperature: 0.8, top_p: 0.9, seed: 17, max_steps: None },
    };
    let a = generate(&ngram, &base, &[4, 4], &req).unwrap();
    let b = generate(&ngram, &base, &[4, 4], &req).unwrap();
    assert_eq!(a.sequence, b.sequence);
    let other = GenerationRequest { sampler: SamplerParams { seed: 18, ..req.sampler.clone() }, ..req.clone() };
    let c = generate(&ngram, &base, &[4, 4], &other).unwrap();
    assert_ne!(a.sequence, c.sequence);
}

#[test]
fn ngram_end_to_end_two_tracks() {
    let corpus: Vec<Vec<u16>> = (0..40).map(|s| encode_multitrack(&patterned_piece(s, 3, 4), &[2, 5, 8]).unwrap().ids()).collect();
    let ngram = NGramModel::fit(5, NGramModel::DEFAULT_ALPHA, corpus.iter().map(Vec::as_slice)).unwrap();
    assert_eq!(ngram.name(), "ngram(order=5)");
    for seed in 0..10 {
        let base = patterned_piece(1000 + seed, 1, 4);
        let reqs = [TrackRequest::default(), TrackRequest::default()];
        let g = generate_tracks(&ngram, &base, &[5], &reqs, None, &SamplerParams { seed, ..Default::default() }).unwrap();
        assert!(validate(&g.sequence).is_empty());
        assert_eq!(count(g.new_tokens(), Token::TrackEnd), 2);
        assert_eq!(g.piece.n_tracks(), 3);
    }
}

#[test]
fn unconditioned_generation_from_empty_piece() {
    let u = UniformPredictor::default();
    let req = GenerationRequest {
        mode: GenerationMode::TrackInpaint { tracks: vec![TrackRequest::default(); 3], max_bars: Some(2) },
        sampler: SamplerParams { seed: 3, ..Default::default() },
    };
    let g = generate(&u, &Piece::empty(), &[], &req).unwrap();
    assert_eq!(g.context_len, 1);
    assert_eq!(g.piece.n_tracks(), 3);
    assert!(g.piece.n_bars() <= 2);
}

#[test]
fn resampling_keeps_instruments_and_levels() {
    let u = UniformPredictor::default();
    let base = patterned_piece(5, 3, 2);
    let d = vec![0, 4, 9];
    let g = resample_iteratively(&u, &base, &d, 2, &SamplerParams::default()).unwrap();
    assert_eq!(g.calls, 6);
    assert_eq!(g.densities, d);
    let inst = |p: &Piece| p.tracks().iter().map(|t| t.instrument).collect::<Vec<_>>();
    assert_eq!(inst(&g.piece), inst(&base));
    assert_eq!(g.piece.n_bars(), base.n_bars());
    assert_ne!(g.piece, base.canonical());
}

#[test]
fn budget_exhaustion_is_reported() {
    let u = UniformPredictor::default();
    let base = patterned_piece(1, 2, 4);
    let sel = BarSelection::new([(0, 1)]);
    let r = inpaint_bars(&u, &base, &[1, 1], &sel, &SamplerParams { max_steps: Some(3), ..Default::default() });
    assert_eq!(r.unwrap_err(), GenerateError::StepBudgetExceeded(3));
}
