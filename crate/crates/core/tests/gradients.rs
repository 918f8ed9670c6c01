//! Analytic gradients against central finite differences.

use adalog::model::{backward, forward, mlm_loss, ModelConfig, Parameters, Targets};
use adalog::normalize::RawRef;
use adalog::tokenize::{TokenSequence, MASK, PAD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
    let mut padded = ids.to_vec();
    padded.resize(max_len, PAD);
    TokenSequence {
        ids: padded,
        length: ids.len(),
        truncated: false,
        raw_ref: RawRef {
            source_id: "grad".into(),
            line_no: 1,
        },
    }
}

/// Two sequences of different length with a few masked positions each.
fn batch(vocab: u32, max_len: usize) -> (Vec<TokenSequence>, Vec<Targets>) {
    let a = [5, MASK, 7, 9, MASK, 11, 4];
    let b = [13, 6, MASK, 17, 19];
    let targets = vec![vec![(1, 8), (4, 10)], vec![(2, 15), (0, 13)]];
    assert!(a.iter().chain(&b).all(|&id| id < vocab));
    (vec![seq(&a, max_len), seq(&b, max_len)], targets)
}

/// Loss with dropout replayed from `dropout`, evaluated through the forward path.
fn loss_of(p: &Parameters, seqs: &[TokenSequence], targets: &[Targets], dropout: Option<u64>) -> f64 {
    let out = forward(p, seqs, dropout.is_some(), dropout.unwrap_or(0)).unwrap();
    mlm_loss(&out, targets).unwrap()
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Checks `per_tensor` coordinates of every tensor; returns (coordinates, max error).
fn check(cfg: ModelConfig, seed: u64, dropout: Option<u64>, per_tensor: usize) -> (usize, f64) {
    let params = Parameters::init(cfg, seed).unwrap();
    let (seqs, targets) = batch(cfg.vocab_size as u32, cfg.max_len);
    let (loss, grads) = backward(&params, &seqs, &targets, dropout).unwrap();
    assert!((loss - loss_of(&params, &seqs, &targets, dropout)).abs() < 1e-12);

    let used: Vec<usize> = seqs.iter().flat_map(|s| s.ids[..s.length].iter().map(|&i| i as usize)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (ti, t) in params.tensors.iter().enumerate() {
        for _ in 0..per_tensor {
            let idx = if t.name == "embeddings.token" {
                // rows of tokens absent from the batch have zero gradient
                let row = used[rng.gen_range(0..used.len())];
                row * t.shape[1] + rng.gen_range(0..t.shape[1])
            } else if t.name == "embeddings.position" {
                rng.gen_range(0..7) * t.shape[1] + rng.gen_range(0..t.shape[1])
            } else {
                rng.gen_range(0..t.data.len())
            };
            let mut plus = params.clone();
            plus.tensors[ti].data[idx] += h;
            let mut minus = params.clone();
            minus.tensors[ti].data[idx] -= h;
            let numeric = (loss_of(&plus, &seqs, &targets, dropout) - loss_of(&minus, &seqs, &targets, dropout)) / (2.0 * h);
            let analytic = grads.tensors[ti].data[idx];
            let err = relative_error(analytic, numeric);
            assert!(
                err < 1e-4,
                "{}[{idx}]: analytic {analytic:e} numeric {numeric:e} error {err:e}",
                t.name
            );
            worst = worst.max(err);
            checked += 1;
        }
    }
    (checked, worst)
}

fn tiny(n_layers: usize, n_heads: usize, dropout_rate: f64) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_heads,
        n_layers,
        d_ff: 32,
        max_len: 8,
        vocab_size: 20,
        dropout_rate,
    }
}

#[test]
fn single_layer_single_head() {
    let (n, worst) = check(tiny(1, 1, 0.0), 11, None, 6);
    assert!(n >= 100, "only {n} coordinates");
    assert!(worst < 1e-4);
}

#[test]
fn two_layers_four_heads() {
    check(tiny(2, 4, 0.0), 12, None, 4);
}

#[test]
fn gradients_replay_dropout_masks() {
    check(tiny(1, 2, 0.3), 13, Some(99), 4);
}
