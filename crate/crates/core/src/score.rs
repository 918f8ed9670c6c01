//! Log-level anomaly scores from masked-token probabilities.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::Label;
use crate::masking::{plan_random, plan_token_by_token, MaskPlan, MaskingStrategy};
use crate::model::{self, Parameters};
use crate::normalize::RawRef;
use crate::tokenize::{TokenSequence, Vocabulary};
use crate::train::Checkpoint;
use crate::{seed, Error, Result};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Logs per forward batch when scoring a corpus.
pub const DEFAULT_BATCH_LOGS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub raw_ref: RawRef,
    pub score: f64,
    /// Masked positions per plan.
    pub masked_count: usize,
    /// `(position, probability of the true token)`, plan after plan.
    pub token_probs: Vec<(usize, f64)>,
    pub strategy: MaskingStrategy,
    pub repeats: usize,
    /// Digest of the checkpoint that produced the probabilities.
    pub checkpoint_digest: String,
}

/// `−mean ln p`.
pub fn aggregate(probs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for p in probs {
        sum -= p.ln();
        n += 1;
    }
    if n == 0 {
        return f64::NAN;
    }
    let s = sum / n as f64;
    // -0.0 when every p is 1
    s.max(0.0)
}

impl ScoreReport {
    /// Recomputes the score from `token_probs`.
    pub fn recomputed_score(&self) -> f64 {
        aggregate(self.token_probs.iter().map(|&(_, p)| p))
    }
}

/// Scores logs against one set of parameters.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    params: &'a Parameters,
    checkpoint_digest: String,
    batch_logs: usize,
}

impl<'a> Scorer<'a> {
    /// Checks that `vocab` is the one the checkpoint was trained with.
    pub fn new(checkpoint: &'a Checkpoint, vocab: &Vocabulary) -> Result<Self> {
        checkpoint.check_vocab(vocab)?;
        Ok(Scorer {
            params: &checkpoint.params,
            checkpoint_digest: checkpoint.digest(),
            batch_logs: DEFAULT_BATCH_LOGS,
        })
    }

    pub fn with_batch_logs(mut self, n: usize) -> Self {
        self.batch_logs = n.max(1);
        self
    }

    pub fn checkpoint_digest(&self) -> &str {
        &self.checkpoint_digest
    }

    fn plans(seq: &TokenSequence, strategy: MaskingStrategy, log_seed: u64, repeats: usize) -> Vec<MaskPlan> {
        match strategy {
            MaskingStrategy::TokenByToken => plan_token_by_token(seq),
            MaskingStrategy::RandomFraction { fraction } => (0..repeats as u64)
                .map(|r| plan_random(seq, fraction, seed::derive(log_seed, &[r])))
                .collect(),
        }
    }

    fn check_args(strategy: MaskingStrategy, repeats: usize) -> Result<()> {
        strategy.validate()?;
        if repeats == 0 {
            return Err(Error::ConfigInvalid {
                field: "repeats".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Scores a group of logs with one forward batch holding every plan.
    fn score_group(
        &self,
        seqs: &[&TokenSequence],
        seeds: &[u64],
        strategy: MaskingStrategy,
        repeats: usize,
    ) -> Result<Vec<ScoreReport>> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut spans = Vec::with_capacity(seqs.len());
        for (seq, &s) in seqs.iter().zip(seeds) {
            if seq.length == 0 {
                return Err(Error::EmptyAfterCleaning);
            }
            let plans = Self::plans(seq, strategy, s, repeats);
            spans.push((plans.len(), plans[0].masked_indices.len()));
            for p in plans {
                targets.push(p.targets());
                inputs.push(p.masked_sequence);
            }
        }
        let probs = model::masked_probabilities(self.params, &inputs, &targets)?;
        let mut next = targets.into_iter().zip(probs);
        let mut reports = Vec::with_capacity(seqs.len());
        for (seq, (n_plans, masked_count)) in seqs.iter().zip(spans) {
            let mut token_probs = Vec::new();
            for (t, p) in next.by_ref().take(n_plans) {
                token_probs.extend(t.iter().zip(p).map(|(&(pos, _), p)| (pos, p.max(PROB_FLOOR))));
            }
            let score = aggregate(token_probs.iter().map(|&(_, p)| p));
            reports.push(ScoreReport {
                raw_ref: seq.raw_ref.clone(),
                score,
                masked_count,
                token_probs,
                strategy,
                repeats: if strategy == MaskingStrategy::TokenByToken { 1 } else { repeats },
                checkpoint_digest: self.checkpoint_digest.clone(),
            });
        }
        Ok(reports)
    }

    /// Scores one log; `seed` keys its mask plans directly.
    pub fn score_log(
        &self,
        seq: &TokenSequence,
        strategy: MaskingStrategy,
        seed: u64,
        repeats: usize,
    ) -> Result<ScoreReport> {
        Self::check_args(strategy, repeats)?;
        Ok(self.score_group(&[seq], &[seed], strategy, repeats)?.remove(0))
    }

    /// Scores every log; log `i` uses the plan seed derived from `(seed, i)`.
    pub fn score_corpus(
        &self,
        corpus: &[TokenSequence],
        strategy: MaskingStrategy,
        seed: u64,
        repeats: usize,
    ) -> Result<Vec<ScoreReport>> {
        Self::check_args(strategy, repeats)?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let indexed: Vec<(usize, &TokenSequence)> = corpus.iter().enumerate().collect();
        let groups: Vec<Vec<ScoreReport>> = indexed
            .par_chunks(self.batch_logs)
            .map(|chunk| {
                let seqs: Vec<&TokenSequence> = chunk.iter().map(|&(_, s)| s).collect();
                let seeds: Vec<u64> = chunk
                    .iter()
                    .map(|&(i, _)| seed::derive(seed, &[i as u64]))
                    .collect();
                self.score_group(&seqs, &seeds, strategy, repeats)
            })
            .collect::<Result<_>>()?;
        Ok(groups.into_iter().flatten().collect())
    }

    pub fn heatmap(&self, corpus: &[TokenSequence], labels: Option<&[Label]>) -> Result<HeatmapMatrix> {
        let reports = self.score_corpus(corpus, MaskingStrategy::TokenByToken, 0, 1)?;
        HeatmapMatrix::from_reports(&reports, labels)
    }
}

/// Scores per log using a checkpoint directly.
pub fn score_log(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    seq: &TokenSequence,
    strategy: MaskingStrategy,
    seed: u64,
    repeats: usize,
) -> Result<ScoreReport> {
    Scorer::new(checkpoint, vocab)?.score_log(seq, strategy, seed, repeats)
}

pub fn score_corpus(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    corpus: &[TokenSequence],
    strategy: MaskingStrategy,
    seed: u64,
    repeats: usize,
) -> Result<Vec<ScoreReport>> {
    Scorer::new(checkpoint, vocab)?.score_corpus(corpus, strategy, seed, repeats)
}

pub fn heatmap(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    corpus: &[TokenSequence],
    labels: Option<&[Label]>,
) -> Result<HeatmapMatrix> {
    Scorer::new(checkpoint, vocab)?.heatmap(corpus, labels)
}

/// Logs × positions grid of true-token probabilities under token-by-token masking.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    pub rows: Vec<Vec<Option<f64>>>,
    pub raw_refs: Vec<RawRef>,
    pub labels: Option<Vec<Label>>,
    pub width: usize,
}

impl HeatmapMatrix {
    pub fn from_reports(reports: &[ScoreReport], labels: Option<&[Label]>) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(l) = labels {
            if l.len() != reports.len() {
                return Err(Error::LengthMismatch {
                    left: reports.len(),
                    right: l.len(),
                });
            }
        }
        let width = reports
            .iter()
            .flat_map(|r| r.token_probs.iter().map(|&(p, _)| p + 1))
            .max()
            .unwrap_or(0);
        let rows = reports
            .iter()
            .map(|r| {
                let mut row = vec![None; width];
                for &(pos, p) in &r.token_probs {
                    row[pos] = Some(p);
                }
                row
            })
            .collect();
        Ok(HeatmapMatrix {
            rows,
            raw_refs: reports.iter().map(|r| r.raw_ref.clone()).collect(),
            labels: labels.map(<[Label]>::to_vec),
            width,
        })
    }

    /// Mean of the present cells in rows carrying `label`.
    pub fn mean_for(&self, label: Label) -> Option<f64> {
        let labels = self.labels.as_ref()?;
        let cells: Vec<f64> = self
            .rows
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == label)
            .flat_map(|(r, _)| r.iter().flatten().copied())
            .collect();
        (!cells.is_empty()).then(|| cells.iter().sum::<f64>() / cells.len() as f64)
    }

    /// Per-position mean over rows with `label`; `None` where no row has that position.
    pub fn position_means(&self, label: Label) -> Option<Vec<Option<f64>>> {
        let labels = self.labels.as_ref()?;
        let mut sums = vec![(0.0, 0usize); self.width];
        for (row, &l) in self.rows.iter().zip(labels) {
            if l != label {
                continue;
            }
            for (acc, cell) in sums.iter_mut().zip(row) {
                if let Some(p) = cell {
                    acc.0 += p;
                    acc.1 += 1;
                }
            }
        }
        Some(
            sums.into_iter()
                .map(|(s, n)| (n > 0).then(|| s / n as f64))
                .collect(),
        )
    }

    /// Tab-separated grid with `NA` for absent cells. With labels, two summary rows
    /// `mean_normal` and `mean_anomalous` follow the data rows.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let cell = |c: &Option<f64>| c.map_or("NA".to_string(), |p| p.to_string());
        let header: Vec<String> = (1..=self.width).map(|p| format!("pos_{p}")).collect();
        writeln!(w, "row\t{}", header.join("\t"))?;
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(cell).collect();
            writeln!(w, "{i}\t{}", cells.join("\t"))?;
        }
        if self.labels.is_some() {
            for (name, label) in [("mean_normal", Label::Normal), ("mean_anomalous", Label::Anomalous)] {
                let means = self.position_means(label).unwrap_or_default();
                let cells: Vec<String> = means.iter().map(cell).collect();
                writeln!(w, "{name}\t{}", cells.join("\t"))?;
            }
        }
        Ok(())
    }

    /// Row provenance: `row, source_id, line_no, label`.
    pub fn write_rows_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row\tsource_id\tline_no\tlabel")?;
        for (i, r) in self.raw_refs.iter().enumerate() {
            let label = self
                .labels
                .as_ref()
                .map_or("NA".to_string(), |l| l[i].as_digit().to_string());
            writeln!(w, "{i}\t{}\t{}\t{label}", r.source_id, r.line_no)?;
        }
        Ok(())
    }
}

/// Header of a scores file, identifying the model that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoresHeader {
    pub checkpoint: String,
    pub vocab: String,
}

pub const SCORES_COLUMNS: &str = "source_id\tline_no\tscore\tmasked_count\tstrategy";

pub fn write_scores<W: Write>(mut w: W, header: &ScoresHeader, reports: &[ScoreReport]) -> Result<()> {
    writeln!(w, "# checkpoint={} vocab={}", header.checkpoint, header.vocab)?;
    writeln!(w, "{SCORES_COLUMNS}")?;
    for r in reports {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.raw_ref.source_id, r.raw_ref.line_no, r.score, r.masked_count, r.strategy
        )?;
    }
    Ok(())
}

/// One row of a scores file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub raw_ref: RawRef,
    pub score: f64,
    pub masked_count: usize,
    pub strategy: MaskingStrategy,
}

impl From<&ScoreReport> for ScoreRow {
    fn from(r: &ScoreReport) -> Self {
        ScoreRow {
            raw_ref: r.raw_ref.clone(),
            score: r.score,
            masked_count: r.masked_count,
            strategy: r.strategy,
        }
    }
}

pub fn read_scores<R: BufRead>(r: R) -> Result<(ScoresHeader, Vec<ScoreRow>)> {
    let bad = |m: String| Error::format("scores file", m);
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    let mut header = ScoresHeader {
        checkpoint: String::new(),
        vocab: String::new(),
    };
    let rest = first
        .strip_prefix("# ")
        .ok_or_else(|| bad("missing `# checkpoint=... vocab=...` line".into()))?;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("checkpoint", v)) => header.checkpoint = v.to_string(),
            Some(("vocab", v)) => header.vocab = v.to_string(),
            _ => return Err(bad(format!("unexpected header item `{kv}`"))),
        }
    }
    if lines.next().transpose()?.as_deref() != Some(SCORES_COLUMNS) {
        return Err(bad("missing column header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(format!("row {}: expected 5 columns", i + 1)));
        }
        let num = |s: &str| bad(format!("row {}: bad number `{s}`", i + 1));
        rows.push(ScoreRow {
            raw_ref: RawRef {
                source_id: f[0].to_string(),
                line_no: f[1].parse().map_err(|_| num(f[1]))?,
            },
            score: f[2].parse().map_err(|_| num(f[2]))?,
            masked_count: f[3].parse().map_err(|_| num(f[3]))?,
            strategy: f[4].parse()?,
        });
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate([1.0, 1.0, 1.0]), 0.0);
        let s = aggregate([0.5, 0.25]);
        assert!((s - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
        assert!((s - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn smaller_probability_raises_score() {
        let base = [0.9, 0.5, 0.3];
        for i in 0..3 {
            let mut lower = base;
            lower[i] *= 0.99;
            assert!(aggregate(lower) > aggregate(base));
        }
    }

    #[test]
    fn scores_file_round_trip() {
        let reports = vec![ScoreReport {
            raw_ref: RawRef {
                source_id: "a.log".into(),
                line_no: 3,
            },
            score: 1.234_567_890_123,
            masked_count: 2,
            token_probs: vec![(0, 0.5), (3, 0.1)],
            strategy: MaskingStrategy::default(),
            repeats: 1,
            checkpoint_digest: "ab".into(),
        }];
        let header = ScoresHeader {
            checkpoint: "ab".into(),
            vocab: "cd".into(),
        };
        let mut buf = Vec::new();
        write_scores(&mut buf, &header, &reports).unwrap();
        let (h, rows) = read_scores(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(rows, vec![ScoreRow::from(&reports[0])]);
    }
}
