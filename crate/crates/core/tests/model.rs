use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackfill_core::model::gradcheck::{corrupt_tensor, grad_check, GradCheckOptions};
use trackfill_core::model::{
    evaluate, load_predictor, save_checkpoint, train, ModelConfig, NGramModel, SequencePredictor, TrainOptions,
    Transformer,
};
use trackfill_core::synth::toy_corpus;
use trackfill_core::{TokenId, VOCAB_SIZE};

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn argmax(scores: &[f64]) -> TokenId {
    scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 as TokenId
}

fn random_ids(rng: &mut ChaCha8Rng, len: usize) -> Vec<TokenId> {
    (0..len).map(|_| rng.random_range(0..VOCAB_SIZE as TokenId)).collect()
}

#[test]
fn desk_scale_gradient_check() {
    let m = Transformer::new_random_readout(&ModelConfig::default()).unwrap();
    let corpus = toy_corpus(2);
    let batch: Vec<&[TokenId]> = corpus.iter().map(|s| &s[..24]).collect();
    let r = grad_check(&m, &batch, &GradCheckOptions::default(), |_, _| {}).unwrap();
    assert!(r.probes.len() >= 200);
    assert!(r.max_rel_error < 1e-3, "{:?}", r.worst());

    let r = grad_check(&m, &batch, &GradCheckOptions::default(), corrupt_tensor("layer1.w_o")).unwrap();
    assert!(r.max_rel_error > 1e-1);
}

#[test]
fn zero_input_batch_bias_gradients() {
    let m = Transformer::new_random_readout(&ModelConfig::tiny()).unwrap();
    let zeros = vec![0 as TokenId; 12];
    let batch: Vec<&[TokenId]> = vec![&zeros, &zeros[..7]];
    let biases: Vec<String> = m
        .layout()
        .specs
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| n.ends_with("_b") || n.contains(".b_") || n == "b_out")
        .collect();
    assert_eq!(biases.len(), 2 * 6 + 2);
    let opts = GradCheckOptions { samples: 280, tensors: Some(biases), ..Default::default() };
    let r = grad_check(&m, &batch, &opts, |_, _| {}).unwrap();
    assert!(r.max_rel_error < 1e-3, "{:?}", r.worst());
}

#[test]
fn scores_normalize_and_respect_causality() {
    let m = Transformer::new_random_readout(&ModelConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let len = rng.random_range(1..40);
        let x = random_ids(&mut rng, len);
        let p = softmax(&m.forward(&x).unwrap());
        assert_eq!(p.len(), VOCAB_SIZE);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);

        // Perturb everything after position k; rows up to k must not move.
        let k = rng.random_range(0..len);
        let mut y = x.clone();
        for t in &mut y[k + 1..] {
            *t = rng.random_range(0..VOCAB_SIZE as TokenId);
        }
        y.push(7);
        let a = m.forward_all(&x).unwrap();
        let b = m.forward_all(&y).unwrap();
        for i in 0..=k {
            assert_eq!(a.row(i), b.row(i), "position {i}");
        }
    }
}

#[test]
fn ngram_distribution_sums_to_one() {
    let corpus = toy_corpus(6);
    let ngram = NGramModel::fit(3, NGramModel::DEFAULT_ALPHA, corpus.iter().map(Vec::as_slice)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let len = rng.random_range(0..6);
        let ctx = random_ids(&mut rng, len);
        let s = ngram.scores(&ctx).unwrap();
        let total: f64 = s.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn checkpoint_reload_gives_identical_scores() {
    let m = Transformer::new_random_readout(&ModelConfig { layers: 1, embed_dim: 16, ff_dim: 32, window: 64, ..Default::default() })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&m, &path).unwrap();
    let back = load_predictor(&path).unwrap();
    let ctx = [0, 1, 8, 137, 3, 403];
    assert_eq!(back.scores(&ctx).unwrap(), m.scores(&ctx).unwrap());
    assert_eq!(back.window(), 64);
}

#[test]
fn single_sequence_is_reproduced_greedily() {
    let seq = toy_corpus(1).remove(0);
    let cfg = ModelConfig {
        layers: 1,
        heads: 2,
        embed_dim: 32,
        window: 256,
        ff_dim: 64,
        learning_rate: 1e-2,
        batch: 1,
        steps: 600,
        seed: 4,
    };
    let opts = TrainOptions { eval_every: 25, target_loss: Some(0.01) };
    let (m, report) = train(&cfg, std::slice::from_ref(&seq), &opts, |_, _| {}).unwrap();
    assert!(report.losses.last().unwrap() < report.losses.first().unwrap());
    assert!(evaluate(&m, std::slice::from_ref(&seq)).unwrap().loss < 0.05);

    // Free-running: feed back the argmax, starting from the first token only.
    let mut session = m.session();
    let mut out = vec![seq[0]];
    session.push(seq[0]).unwrap();
    while out.len() < seq.len() {
        let t = argmax(&session.scores().unwrap());
        out.push(t);
        session.push(t).unwrap();
    }
    assert_eq!(out, seq);
}
