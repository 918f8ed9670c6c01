//! Scores against brute-force recomputation, plus softmax and loss identities.

use std::sync::OnceLock;

use adalog::corpus::{synthesize, Split};
use adalog::masking::MaskingStrategy;
use adalog::model::{forward, mlm_loss, ModelConfig, Parameters};
use adalog::score::{Scorer, PROB_FLOOR};
use adalog::tokenize::{encode_all, TokenSequence, Vocabulary, MASK};
use adalog::train::{train, Checkpoint, TrainConfig};

struct Fixture {
    vocab: Vocabulary,
    ckpt: Checkpoint,
    test: Vec<TokenSequence>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let corpus = synthesize(8, 400, 40, 21).unwrap();
        let split = Split::from_corpus(&corpus, 21).unwrap();
        let vocab = Vocabulary::build(&split.train, 1, 4096).unwrap();
        let model = ModelConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 1,
            d_ff: 64,
            max_len: 48,
            vocab_size: vocab.len(),
            dropout_rate: 0.1,
        };
        let seqs = encode_all(&vocab, &split.train, model.max_len).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 21,
            ..Default::default()
        };
        let ckpt = train(&seqs, &vocab, model, cfg).unwrap();
        let test = encode_all(&vocab, &split.test, model.max_len).unwrap();
        Fixture { vocab, ckpt, test }
    })
}

/// One forward pass per position, each with only that position masked.
fn brute_force_score(params: &Parameters, seq: &TokenSequence) -> f64 {
    let mut total = 0.0;
    for i in 0..seq.length {
        let mut masked = seq.clone();
        let truth = masked.ids[i] as usize;
        masked.ids[i] = MASK;
        let out = forward(params, &[masked], false, 0).unwrap();
        total -= out.probabilities_at(0, i)[truth].max(PROB_FLOOR).ln();
    }
    total / seq.length as f64
}

#[test]
fn token_by_token_matches_brute_force() {
    let f = fixture();
    let scorer = Scorer::new(&f.ckpt, &f.vocab).unwrap();
    for seq in f.test.iter().take(25) {
        let report = scorer.score_log(seq, MaskingStrategy::TokenByToken, 0, 1).unwrap();
        let oracle = brute_force_score(&f.ckpt.params, seq);
        assert!((report.score - oracle).abs() < 1e-6, "{} vs {oracle}", report.score);
        assert_eq!(report.token_probs.len(), seq.length);
    }
}

#[test]
fn every_report_is_self_consistent() {
    let f = fixture();
    let scorer = Scorer::new(&f.ckpt, &f.vocab).unwrap();
    for strategy in [
        MaskingStrategy::TokenByToken,
        MaskingStrategy::random(0.15).unwrap(),
        MaskingStrategy::random(0.5).unwrap(),
    ] {
        for repeats in [1, 3] {
            for r in scorer.score_corpus(&f.test, strategy, 5, repeats).unwrap() {
                assert!((r.score - r.recomputed_score()).abs() < 1e-9);
                assert!(r.token_probs.iter().all(|&(_, p)| (PROB_FLOOR..=1.0).contains(&p)));
            }
        }
    }
}

#[test]
fn scores_do_not_depend_on_batch_size() {
    let f = fixture();
    let strategy = MaskingStrategy::random(0.25).unwrap();
    let one = Scorer::new(&f.ckpt, &f.vocab).unwrap().with_batch_logs(1);
    let many = Scorer::new(&f.ckpt, &f.vocab).unwrap().with_batch_logs(64);
    let a = one.score_corpus(&f.test, strategy, 9, 2).unwrap();
    let b = many.score_corpus(&f.test, strategy, 9, 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn repeats_shrink_score_variance() {
    let f = fixture();
    let scorer = Scorer::new(&f.ckpt, &f.vocab).unwrap();
    let strategy = MaskingStrategy::random(0.15).unwrap();
    let variance = |repeats: usize| {
        let mut total = 0.0;
        for seq in f.test.iter().take(10) {
            let s: Vec<f64> = (0..30)
                .map(|seed| scorer.score_log(seq, strategy, seed, repeats).unwrap().score)
                .collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            total += s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        }
        total
    };
    let (v1, v8) = (variance(1), variance(8));
    assert!(v8 < v1 / 2.0, "variance {v1} with one plan, {v8} with eight");
}

#[test]
fn probability_rows_sum_to_one() {
    let f = fixture();
    let out = forward(&f.ckpt.params, &f.test[..8], false, 0).unwrap();
    for b in 0..out.batch {
        for pos in 0..out.seq_len {
            let sum: f64 = out.probabilities_at(b, pos).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn constant_logits_give_log_vocab_loss() {
    let f = fixture();
    let mut params = f.ckpt.params.clone();
    let v = params.config.vocab_size;
    for t in &mut params.tensors {
        if t.name == "head.weight" {
            t.data.fill(0.0);
        } else if t.name == "head.bias" {
            t.data.fill(0.37);
        }
    }
    let seqs = &f.test[..4];
    let out = forward(&params, seqs, false, 0).unwrap();
    let targets: Vec<_> = seqs
        .iter()
        .map(|s| (0..s.length).map(|i| (i, s.ids[i])).collect())
        .collect();
    let loss = mlm_loss(&out, &targets).unwrap();
    assert!((loss - (v as f64).ln()).abs() < 1e-6);
    for p in out.probabilities_at(0, 0) {
        assert!((p - 1.0 / v as f64).abs() < 1e-12);
    }
}
