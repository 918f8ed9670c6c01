//! Classification against the threshold, evaluation metrics and ablations.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate, sweep, SweepRow, Threshold};
use crate::masking::MaskingStrategy;
use crate::model::{ModelConfig, Parameters};
use crate::normalize::{CleanLog, RawRef};
use crate::score::{ScoreReport, Scorer};
use crate::tokenize::{encode_all, Vocabulary};
use crate::train::{train, Checkpoint, TrainConfig};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    /// `0` for normal, `1` for anomalous.
    pub fn as_digit(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomalous => 1,
        }
    }

    pub fn from_digit(s: &str) -> Option<Self> {
        match s.trim() {
            "0" => Some(Label::Normal),
            "1" => Some(Label::Anomalous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub raw_ref: Option<RawRef>,
    pub score: f64,
    pub threshold_value: f64,
    pub label: Label,
}

impl Verdict {
    /// Anomalous iff `score > threshold`.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        Verdict {
            raw_ref: None,
            score,
            threshold_value: threshold,
            label: if score > threshold { Label::Anomalous } else { Label::Normal },
        }
    }
}

pub fn check_checkpoint(expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::CheckpointMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

pub fn classify(report: &ScoreReport, t: &Threshold) -> Result<Verdict> {
    check_checkpoint(&t.checkpoint_digest, &report.checkpoint_digest)?;
    Ok(Verdict {
        raw_ref: Some(report.raw_ref.clone()),
        ..Verdict::from_score(report.score, t.value)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when `tp + fp = 0`; precision is then reported as 0.
    pub precision_undefined: bool,
    /// Set when `tp + fn = 0`; recall is then reported as 0.
    pub recall_undefined: bool,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            precision_undefined: tp + fp == 0,
            recall_undefined: tp + fn_ == 0,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Confusion counts with anomalous as the positive class. A truth vector without
/// anomalies still yields a report, flagged through `recall_undefined`.
pub fn metrics(verdicts: &[Verdict], truth: &[Label]) -> Result<MetricsReport> {
    if verdicts.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: verdicts.len(),
            right: truth.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (v, &t) in verdicts.iter().zip(truth) {
        match (v.label, t) {
            (Label::Anomalous, Label::Anomalous) => tp += 1,
            (Label::Anomalous, Label::Normal) => fp += 1,
            (Label::Normal, Label::Anomalous) => fn_ += 1,
            (Label::Normal, Label::Normal) => tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Calibration,
}

/// A test log whose cleaned text also occurs in training or calibration data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub text: String,
    pub test_ref: RawRef,
    pub partition: Partition,
}

/// Fails with every collision if any test text appears in `train` or `calibration`.
pub fn check_leakage(train: &[CleanLog], calibration: &[CleanLog], test: &[CleanLog]) -> Result<()> {
    let train: HashSet<&str> = train.iter().map(|l| l.text.as_str()).collect();
    let calibration: HashSet<&str> = calibration.iter().map(|l| l.text.as_str()).collect();
    let mut collisions = Vec::new();
    for log in test {
        for (set, partition) in [(&train, Partition::Train), (&calibration, Partition::Calibration)] {
            if set.contains(log.text.as_str()) {
                collisions.push(Collision {
                    text: log.text.clone(),
                    test_ref: log.raw_ref.clone(),
                    partition,
                });
            }
        }
    }
    if collisions.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(collisions))
    }
}

/// Partitions for one evaluation. `calibration` holds normal logs only.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCorpora {
    pub train: Vec<CleanLog>,
    pub calibration: Vec<CleanLog>,
    pub test: Vec<CleanLog>,
    pub test_labels: Vec<Label>,
}

impl EvalCorpora {
    /// Label lengths, non-emptiness and leakage.
    pub fn validate(&self) -> Result<()> {
        if self.test.len() != self.test_labels.len() {
            return Err(Error::LengthMismatch {
                left: self.test.len(),
                right: self.test_labels.len(),
            });
        }
        if self.calibration.is_empty() || self.test.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        check_leakage(&self.train, &self.calibration, &self.test)
    }
}

/// Seeds for the calibration and test scoring passes, fanned out from one seed.
pub fn pass_seeds(seed: u64) -> (u64, u64) {
    (seed::derive(seed, &[0xca1]), seed::derive(seed, &[0x7e57]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub threshold: Threshold,
    pub calibration: Vec<ScoreReport>,
    pub test: Vec<ScoreReport>,
    pub verdicts: Vec<Verdict>,
    pub metrics: MetricsReport,
}

struct Scored {
    calibration: Vec<ScoreReport>,
    test: Vec<ScoreReport>,
}

fn score_partitions(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    corpora: &EvalCorpora,
    strategy: MaskingStrategy,
    seed: u64,
    repeats: usize,
) -> Result<Scored> {
    corpora.validate()?;
    let scorer = Scorer::new(checkpoint, vocab)?;
    let max_len = checkpoint.config().max_len;
    let (cal_seed, test_seed) = pass_seeds(seed);
    let cal = encode_all(vocab, &corpora.calibration, max_len)?;
    let test = encode_all(vocab, &corpora.test, max_len)?;
    Ok(Scored {
        calibration: scorer.score_corpus(&cal, strategy, cal_seed, repeats)?,
        test: scorer.score_corpus(&test, strategy, test_seed, repeats)?,
    })
}

/// Scores, calibrates, classifies and evaluates.
pub fn run_pipeline(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    corpora: &EvalCorpora,
    strategy: MaskingStrategy,
    percentile: f64,
    seed: u64,
    repeats: usize,
) -> Result<PipelineResult> {
    let scored = score_partitions(checkpoint, vocab, corpora, strategy, seed, repeats)?;
    let threshold = calibrate(&scored.calibration, percentile, &vocab.digest())?;
    let verdicts = scored
        .test
        .iter()
        .map(|r| classify(r, &threshold))
        .collect::<Result<Vec<_>>>()?;
    let metrics = metrics(&verdicts, &corpora.test_labels)?;
    Ok(PipelineResult {
        threshold,
        calibration: scored.calibration,
        test: scored.test,
        verdicts,
        metrics,
    })
}

/// Strategies × percentiles, each cell recalibrated under its own strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingGrid {
    pub strategies: Vec<MaskingStrategy>,
    pub percentiles: Vec<f64>,
    /// `cells[s][p]`.
    pub cells: Vec<Vec<SweepRow>>,
}

impl MaskingGrid {
    pub fn cell(&self, strategy: MaskingStrategy, percentile: f64) -> Option<&SweepRow> {
        let s = self.strategies.iter().position(|&x| x == strategy)?;
        let p = self.percentiles.iter().position(|&x| x == percentile)?;
        Some(&self.cells[s][p])
    }

    pub fn best_f1(&self) -> f64 {
        self.cells.iter().flatten().map(|c| c.metrics.f1).fold(0.0, f64::max)
    }

    pub fn row_best_f1(&self, strategy: MaskingStrategy) -> Option<f64> {
        let s = self.strategies.iter().position(|&x| x == strategy)?;
        Some(self.cells[s].iter().map(|c| c.metrics.f1).fold(0.0, f64::max))
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "strategy\tpercentile\tthreshold\ttp\tfp\tfn\ttn\tprecision\trecall\tf1")?;
        for (s, row) in self.strategies.iter().zip(&self.cells) {
            for c in row {
                let m = &c.metrics;
                writeln!(
                    w,
                    "{s}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    c.percentile, c.threshold, m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1
                )?;
            }
        }
        Ok(())
    }
}

/// The four strategies compared in the masking ablation.
pub fn ablation_strategies() -> Vec<MaskingStrategy> {
    vec![
        MaskingStrategy::TokenByToken,
        MaskingStrategy::RandomFraction { fraction: 0.15 },
        MaskingStrategy::RandomFraction { fraction: 0.25 },
        MaskingStrategy::RandomFraction { fraction: 0.50 },
    ]
}

pub fn ablate_masking(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    corpora: &EvalCorpora,
    strategies: &[MaskingStrategy],
    percentiles: &[f64],
    seed: u64,
    repeats: usize,
) -> Result<MaskingGrid> {
    let mut cells = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let scored = score_partitions(checkpoint, vocab, corpora, strategy, seed, repeats)?;
        let normal: Vec<f64> = scored.calibration.iter().map(|r| r.score).collect();
        let test: Vec<(f64, Label)> = scored
            .test
            .iter()
            .map(|r| r.score)
            .zip(corpora.test_labels.iter().copied())
            .collect();
        cells.push(sweep(&normal, percentiles, &test)?);
    }
    Ok(MaskingGrid {
        strategies: strategies.to_vec(),
        percentiles: percentiles.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneAblation {
    pub untrained: MetricsReport,
    pub trained: MetricsReport,
    /// Mean score of the untrained model over the calibration logs.
    pub untrained_mean_normal_score: f64,
    pub ln_vocab_size: f64,
}

/// Runs the same pipeline with the trained weights and with the initialization
/// the trainer started from.
pub fn compare_finetune(
    trained: &Checkpoint,
    vocab: &Vocabulary,
    corpora: &EvalCorpora,
    strategy: MaskingStrategy,
    percentile: f64,
    seed: u64,
) -> Result<FinetuneAblation> {
    let init = Parameters::init(*trained.config(), trained.train_config.seed)?;
    let untrained = Checkpoint::untrained(init, vocab, trained.train_config);
    let before = run_pipeline(&untrained, vocab, corpora, strategy, percentile, seed, 1)?;
    let after = run_pipeline(trained, vocab, corpora, strategy, percentile, seed, 1)?;
    let mean = before.calibration.iter().map(|r| r.score).sum::<f64>() / before.calibration.len() as f64;
    Ok(FinetuneAblation {
        untrained: before.metrics,
        trained: after.metrics,
        untrained_mean_normal_score: mean,
        ln_vocab_size: (vocab.len() as f64).ln(),
    })
}

/// Trains on `corpora.train`, then compares against the untrained initialization.
pub fn ablate_finetune(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    vocab: &Vocabulary,
    corpora: &EvalCorpora,
    percentile: f64,
    seed: u64,
) -> Result<(Checkpoint, FinetuneAblation)> {
    corpora.validate()?;
    let seqs = encode_all(vocab, &corpora.train, model_cfg.max_len)?;
    let ckpt = train(&seqs, vocab, model_cfg, train_cfg)?;
    let strategy = MaskingStrategy::RandomFraction {
        fraction: train_cfg.mask_fraction,
    };
    let report = compare_finetune(&ckpt, vocab, corpora, strategy, percentile, seed)?;
    Ok((ckpt, report))
}

pub const VERDICT_COLUMNS: &str = "source_id\tline_no\tscore\tthreshold\tlabel";

pub fn write_verdicts<W: Write>(mut w: W, verdicts: &[Verdict]) -> Result<()> {
    writeln!(w, "{VERDICT_COLUMNS}")?;
    for v in verdicts {
        let (src, line) = v
            .raw_ref
            .as_ref()
            .map_or(("".to_string(), "".to_string()), |r| (r.source_id.clone(), r.line_no.to_string()));
        writeln!(w, "{src}\t{line}\t{}\t{}\t{}", v.score, v.threshold_value, v.label.as_digit())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(text: &str, i: usize) -> CleanLog {
        CleanLog::new(
            text,
            RawRef {
                source_id: "t".into(),
                line_no: i,
            },
        )
    }

    #[test]
    fn strict_inequality() {
        assert_eq!(Verdict::from_score(1.2, 1.0).label, Label::Anomalous);
        assert_eq!(Verdict::from_score(1.0, 1.0).label, Label::Normal);
    }

    #[test]
    fn metric_examples() {
        let m = MetricsReport::from_counts(9, 1, 1, 5);
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.f1 - 0.9).abs() < 1e-12);
        let m = MetricsReport::from_counts(4, 0, 0, 6);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = MetricsReport::from_counts(0, 0, 3, 2);
        assert!(m.precision_undefined && !m.recall_undefined);
        assert_eq!(m.f1, 0.0);
        let m = MetricsReport::from_counts(0, 2, 0, 2);
        assert!(m.recall_undefined);
    }

    #[test]
    fn metrics_counts_and_lengths() {
        let v: Vec<Verdict> = [2.0, 0.5, 2.0, 0.1].iter().map(|&s| Verdict::from_score(s, 1.0)).collect();
        let truth = [Label::Anomalous, Label::Anomalous, Label::Normal, Label::Normal];
        let m = metrics(&v, &truth).unwrap();
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (1, 1, 1, 1));
        assert_eq!(m.total(), 4);
        assert!(matches!(metrics(&v, &truth[..2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn leakage_is_reported() {
        let train = [log("a b", 0)];
        let cal = [log("c d", 1)];
        assert!(check_leakage(&train, &cal, &[log("e f", 2)]).is_ok());
        match check_leakage(&train, &cal, &[log("e f", 2), log("a b", 3), log("c d", 4)]) {
            Err(Error::Leakage(c)) => {
                assert_eq!(c.len(), 2);
                assert_eq!(c[0].text, "a b");
                assert_eq!(c[0].partition, Partition::Train);
                assert_eq!(c[0].test_ref.line_no, 3);
                assert_eq!(c[1].partition, Partition::Calibration);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn label_digits() {
        assert_eq!(Label::from_digit("1"), Some(Label::Anomalous));
        assert_eq!(Label::from_digit(" 0 "), Some(Label::Normal));
        assert_eq!(Label::from_digit("2"), None);
        assert_eq!(Label::Anomalous.as_digit(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn raising_threshold_never_adds_positives(
                scores in proptest::collection::vec(0.0f64..10.0, 1..50),
                t1 in 0.0f64..10.0,
                dt in 0.0f64..5.0,
            ) {
                let pos = |t: f64| scores.iter().filter(|&&s| Verdict::from_score(s, t).label == Label::Anomalous).count();
                prop_assert!(pos(t1 + dt) <= pos(t1));
                for &s in &scores {
                    if Verdict::from_score(s, t1).label == Label::Normal {
                        prop_assert_eq!(Verdict::from_score(s, t1 + dt).label, Label::Normal);
                    }
                }
            }

            #[test]
            fn metric_identities(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
                let m = MetricsReport::from_counts(tp, fp, fn_, tn);
                prop_assert_eq!(m.total(), tp + fp + fn_ + tn);
                if tp + fp > 0 { prop_assert!((m.precision - tp as f64 / (tp + fp) as f64).abs() < 1e-12); }
                if tp + fn_ > 0 { prop_assert!((m.recall - tp as f64 / (tp + fn_) as f64).abs() < 1e-12); }
                prop_assert_eq!(m.f1 == 0.0, tp == 0);
                prop_assert!((0.0..=1.0).contains(&m.f1));
            }
        }
    }
}
