//! Threshold selection against a sort-and-interpolate oracle.

use adalog::calibrate::{select_threshold, sweep, SWEEP_PERCENTILES};
use adalog::detect::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle(scores: &[f64], p: f64) -> f64 {
    let mut x = scores.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = p / 100.0 * (x.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= x.len() {
        return x[x.len() - 1];
    }
    x[lo] + (h - lo as f64) * (x[lo + 1] - x[lo])
}

fn score_set(rng: &mut ChaCha8Rng, i: usize) -> Vec<f64> {
    let n = rng.gen_range(1..200);
    match i % 4 {
        // constant
        0 => vec![rng.gen_range(0.0..10.0); n],
        // a handful of distinct values, many ties
        1 => {
            let levels: Vec<f64> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0.0..5.0)).collect();
            (0..n).map(|_| levels[rng.gen_range(0..levels.len())]).collect()
        }
        // heavy tail
        2 => (0..n).map(|_| (-rng.gen_range(1e-9f64..1.0).ln()).powi(3)).collect(),
        _ => (0..n).map(|_| rng.gen_range(0.0..20.0)).collect(),
    }
}

#[test]
fn matches_oracle_on_a_thousand_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let scores = score_set(&mut rng, i);
        let mut percentiles = SWEEP_PERCENTILES.to_vec();
        percentiles.push(rng.gen_range(0.01..100.0));
        for p in percentiles {
            let t = select_threshold(&scores, p).unwrap();
            assert_eq!(t.value.to_bits(), oracle(&scores, p).to_bits(), "set {i} p {p}: {scores:?}");
            assert_eq!(t.n_calibration, scores.len());
        }
    }
}

#[test]
fn hundredth_percentile_is_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let scores = score_set(&mut rng, i);
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(select_threshold(&scores, 100.0).unwrap().value, max);
    }
}

#[test]
fn sweep_rows_follow_the_strict_rule() {
    let normal = [1.0, 2.0, 3.0, 4.0, 5.0];
    let test = [(5.0, Label::Anomalous), (5.5, Label::Anomalous), (4.5, Label::Normal), (1.0, Label::Normal)];
    let rows = sweep(&normal, &[100.0, 75.0], &test).unwrap();
    // at T = 5 the anomaly scoring exactly 5 is not flagged
    assert_eq!((rows[0].metrics.tp, rows[0].metrics.fn_, rows[0].metrics.fp), (1, 1, 0));
    // at T = 4 both anomalies and the 4.5 normal are flagged
    assert_eq!((rows[1].metrics.tp, rows[1].metrics.fp), (2, 1));
}
