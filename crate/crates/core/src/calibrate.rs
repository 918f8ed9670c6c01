//! Threshold selection as a quantile of normal validation scores.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detect::{metrics, Label, MetricsReport, Verdict};
use crate::masking::MaskingStrategy;
use crate::score::ScoreReport;
use crate::{Error, Result};

pub const DEFAULT_PERCENTILE: f64 = 90.0;

/// The percentile grid used for threshold sweeps.
pub const SWEEP_PERCENTILES: [f64; 7] = [70.0, 75.0, 80.0, 85.0, 90.0, 95.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub value: f64,
    pub percentile: f64,
    pub n_calibration: usize,
    pub checkpoint_digest: String,
    pub vocab_digest: String,
    pub strategy: MaskingStrategy,
}

fn check_percentile(percentile: f64) -> Result<()> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::ConfigInvalid {
            field: "percentile".into(),
            message: format!("{percentile} is outside (0, 100]"),
        });
    }
    Ok(())
}

/// Linear-interpolation quantile: with sorted `x` and `h = p/100 · (n−1)`,
/// `x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn quantile(scores: &[f64], percentile: f64) -> Result<f64> {
    check_percentile(percentile)?;
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore(i));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = percentile / 100.0 * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Threshold from bare scores; provenance fields are left empty.
pub fn select_threshold(scores: &[f64], percentile: f64) -> Result<Threshold> {
    Ok(Threshold {
        value: quantile(scores, percentile)?,
        percentile,
        n_calibration: scores.len(),
        checkpoint_digest: String::new(),
        vocab_digest: String::new(),
        strategy: MaskingStrategy::default(),
    })
}

/// Threshold from normal validation reports, stamped with their provenance.
pub fn calibrate(reports: &[ScoreReport], percentile: f64, vocab_digest: &str) -> Result<Threshold> {
    let first = reports.first().ok_or(Error::EmptyScores)?;
    if let Some(r) = reports.iter().find(|r| r.checkpoint_digest != first.checkpoint_digest) {
        return Err(Error::CheckpointMismatch {
            expected: first.checkpoint_digest.clone(),
            found: r.checkpoint_digest.clone(),
        });
    }
    let scores: Vec<f64> = reports.iter().map(|r| r.score).collect();
    Ok(Threshold {
        checkpoint_digest: first.checkpoint_digest.clone(),
        vocab_digest: vocab_digest.to_string(),
        strategy: first.strategy,
        ..select_threshold(&scores, percentile)?
    })
}

impl Threshold {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("threshold file", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub percentile: f64,
    pub threshold: f64,
    pub metrics: MetricsReport,
}

/// One row per percentile: threshold from `normal_scores`, metrics on `test`.
pub fn sweep(normal_scores: &[f64], percentiles: &[f64], test: &[(f64, Label)]) -> Result<Vec<SweepRow>> {
    let has = |l: Label| test.iter().any(|&(_, t)| t == l);
    if !has(Label::Anomalous) {
        return Err(Error::NoAnomaliesInTruth);
    }
    if !has(Label::Normal) {
        return Err(Error::format("sweep test set", "contains no normal logs"));
    }
    let truth: Vec<Label> = test.iter().map(|&(_, l)| l).collect();
    percentiles
        .iter()
        .map(|&p| {
            let t = quantile(normal_scores, p)?;
            let verdicts: Vec<Verdict> = test.iter().map(|&(s, _)| Verdict::from_score(s, t)).collect();
            Ok(SweepRow {
                percentile: p,
                threshold: t,
                metrics: metrics(&verdicts, &truth)?,
            })
        })
        .collect()
}

pub const SWEEP_COLUMNS: &str = "percentile\tthreshold\tprecision\trecall\tf1";

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_COLUMNS}")?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.percentile, r.threshold, r.metrics.precision, r.metrics.recall, r.metrics.f1
        )?;
    }
    Ok(())
}
