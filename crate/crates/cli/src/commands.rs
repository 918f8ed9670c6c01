//! Subcommand implementations.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use adalog::calibrate::{select_threshold, sweep, write_sweep, Threshold};
use adalog::corpus::{self, LabeledCorpus};
use adalog::detect::{
    ablate_finetune, ablate_masking, ablation_strategies, check_leakage, metrics, write_verdicts,
    EvalCorpora, Label, Verdict,
};
use adalog::normalize::{clean_all, CleanLog, Normalizer, RawRef};
use adalog::score::{read_scores, write_scores, ScoreRow, Scorer, ScoresHeader};
use adalog::tokenize::{encode_all, Vocabulary};
use adalog::train::{train_with_progress, Checkpoint};

use crate::config::Config;
use crate::manifest::RunManifest;
use crate::{CliError, Cli, Command};

type Result<T> = std::result::Result<T, CliError>;

/// Bookkeeping shared by every command.
struct Ctx {
    cfg: Config,
    manifest: RunManifest,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::missing(path, e))?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), adalog::digest(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.manifest
            .outputs
            .insert(path.display().to_string(), adalog::digest(bytes));
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl serde::Serialize) {
        self.manifest
            .notes
            .insert(key.to_string(), serde_json::to_value(value).expect("note serializes"));
    }

    fn digest(&mut self, key: &str, value: &str) {
        self.manifest.digests.insert(key.to_string(), value.to_string());
    }

    fn clean_logs(&mut self, path: &Path) -> Result<Vec<CleanLog>> {
        let bytes = self.read(path)?;
        let source = path.display().to_string();
        BufReader::new(&bytes[..])
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.map(|text| {
                    CleanLog::new(
                        text,
                        RawRef {
                            source_id: source.clone(),
                            line_no: i + 1,
                        },
                    )
                })
            })
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::missing(path, e))
    }

    fn labels(&mut self, path: &Path) -> Result<Vec<Label>> {
        let bytes = self.read(path)?;
        Ok(corpus::read_labels(&bytes[..])?)
    }

    fn vocab(&mut self, path: &Path) -> Result<Vocabulary> {
        let bytes = self.read(path)?;
        let v = Vocabulary::read_from(&bytes[..])?;
        self.digest("vocab", &v.digest());
        Ok(v)
    }

    fn checkpoint(&mut self, path: &Path) -> Result<Checkpoint> {
        let bytes = self.read(path)?;
        let c = Checkpoint::read_from(&bytes[..])?;
        self.digest("checkpoint", &adalog::digest(&bytes));
        Ok(c)
    }

    fn finish(mut self, primary: &Path) -> Result<()> {
        self.manifest.write(primary)?;
        Ok(())
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Clean(_) => "clean",
        Command::Split(_) => "split",
        Command::BuildVocab(_) => "build-vocab",
        Command::Train(_) => "train",
        Command::Score(_) => "score",
        Command::Calibrate(_) => "calibrate",
        Command::Detect(_) => "detect",
        Command::Eval(_) => "eval",
        Command::AblateMasking(_) => "ablate-masking",
        Command::AblateFinetune(_) => "ablate-finetune",
        Command::Heatmap(_) => "heatmap",
        Command::Rerun(_) => "rerun",
        Command::ShowConfig(_) => "show-config",
    }
}

pub fn dispatch(cli: Cli, argv: Vec<String>) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::config("threads", e.to_string()))?;
    let name = command_name(&cli.command);
    let mut ctx = Ctx {
        manifest: RunManifest::new(name, argv, cfg.clone()),
        cfg,
    };
    if let Some(path) = &cli.config {
        ctx.read(path)?;
    }
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(ctx, a),
        Command::Clean(a) => clean(ctx, a),
        Command::Split(a) => split(ctx, a),
        Command::BuildVocab(a) => build_vocab(ctx, a),
        Command::Train(a) => train(ctx, a),
        Command::Score(a) => score(ctx, a),
        Command::Calibrate(a) => calibrate(ctx, a),
        Command::Detect(a) => detect(ctx, a),
        Command::Eval(a) => eval(ctx, a),
        Command::AblateMasking(a) => ablate_masking_cmd(ctx, a),
        Command::AblateFinetune(a) => ablate_finetune_cmd(ctx, a),
        Command::Heatmap(a) => heatmap(ctx, a),
        Command::Rerun(a) => rerun(a),
        Command::ShowConfig(a) => show_config(ctx, a),
    })
}

fn lines_to_bytes<'a>(lines: impl IntoIterator<Item = &'a str>) -> Vec<u8> {
    let mut out = Vec::new();
    for l in lines {
        out.extend_from_slice(l.as_bytes());
        out.push(b'\n');
    }
    out
}

fn labels_to_bytes(labels: &[Label]) -> Vec<u8> {
    let mut out = Vec::new();
    corpus::write_labels(&mut out, labels).expect("in-memory write");
    out
}

fn synth(mut ctx: Ctx, a: crate::SynthArgs) -> Result<()> {
    let s = &mut ctx.cfg.synth;
    s.templates = a.templates.unwrap_or(s.templates);
    s.normal = a.normal.unwrap_or(s.normal);
    s.anomalies = a.anomalies.unwrap_or(s.anomalies);
    let s = ctx.cfg.synth.clone();
    ctx.manifest.config.synth = s.clone();
    let synth = corpus::synthesize_raw(s.templates, s.normal, s.anomalies, ctx.cfg.seed)?;
    ctx.write(&a.out, &lines_to_bytes(synth.lines.iter().map(String::as_str)))?;
    ctx.write(&a.labels_out, &labels_to_bytes(&synth.labels))?;
    ctx.note("normal", s.normal);
    ctx.note("anomalies", s.anomalies);
    println!("wrote {} lines to {}", synth.lines.len(), a.out.display());
    ctx.finish(&a.out)
}

fn clean(mut ctx: Ctx, a: crate::CleanArgs) -> Result<()> {
    let normalizer = Normalizer::new(ctx.cfg.normalize.clone())?;
    let bytes = ctx.read(&a.input)?;
    let raws = corpus::read_lines(&bytes[..], &a.input.display().to_string())?;
    let (clean, report) = clean_all(&normalizer, &raws);
    ctx.write(&a.out, &lines_to_bytes(clean.iter().map(|c| c.text.as_str())))?;
    if let (Some(lp), Some(out)) = (&a.labels, &a.labels_out) {
        let labels = ctx.labels(lp)?;
        if labels.len() != raws.len() {
            return Err(adalog::Error::LengthMismatch {
                left: raws.len(),
                right: labels.len(),
            }
            .into());
        }
        let kept: Vec<Label> = clean.iter().map(|c| labels[c.raw_ref.line_no - 1]).collect();
        ctx.write(out, &labels_to_bytes(&kept))?;
    }
    let report_path = PathBuf::from(format!("{}.report.json", a.out.display()));
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    ctx.write(&report_path, report_json.as_bytes())?;
    ctx.note("kept", report.kept);
    ctx.note("dropped_lines", &report.dropped_lines);
    println!(
        "cleaned {} lines, kept {}, dropped {}",
        report.total_lines,
        report.kept,
        report.dropped_lines.len()
    );
    ctx.finish(&a.out)
}

fn split(mut ctx: Ctx, a: crate::SplitArgs) -> Result<()> {
    let logs = ctx.clean_logs(&a.input)?;
    let labels = ctx.labels(&a.labels)?;
    if logs.len() != labels.len() {
        return Err(adalog::Error::LengthMismatch {
            left: logs.len(),
            right: labels.len(),
        }
        .into());
    }
    let labeled = LabeledCorpus {
        records: logs.into_iter().zip(labels).collect(),
        source: a.input.display().to_string(),
    };
    let normals = corpus::dedupe(&labeled.logs_with(Label::Normal));
    let anomalies = corpus::dedupe(&labeled.logs_with(Label::Anomalous));
    let s = corpus::split(&normals.logs, &anomalies.logs, ctx.cfg.seed)?;
    let text = |logs: &[CleanLog]| lines_to_bytes(logs.iter().map(|c| c.text.as_str()));
    let dir = &a.out_dir;
    ctx.write(&dir.join("train.log"), &text(&s.train))?;
    ctx.write(&dir.join("validation.log"), &text(&s.validation))?;
    ctx.write(&dir.join("test.log"), &text(&s.test))?;
    ctx.write(&dir.join("test.labels"), &labels_to_bytes(&s.test_labels))?;
    ctx.note("unique_normals", normals.logs.len());
    ctx.note("unique_anomalies", anomalies.logs.len());
    ctx.note("normal_multiplicities", &normals.multiplicities);
    ctx.note(
        "sizes",
        [s.train.len(), s.validation.len(), s.test.len()],
    );
    println!(
        "train {} / validation {} / test {}",
        s.train.len(),
        s.validation.len(),
        s.test.len()
    );
    ctx.finish(&dir.join("train.log"))
}

fn build_vocab(mut ctx: Ctx, a: crate::BuildVocabArgs) -> Result<()> {
    if let Some(v) = a.min_freq {
        ctx.cfg.vocab.min_freq = v;
    }
    if let Some(v) = a.max_size {
        ctx.cfg.vocab.max_size = v;
    }
    ctx.manifest.config.vocab = ctx.cfg.vocab.clone();
    let logs = ctx.clean_logs(&a.input)?;
    let vocab = Vocabulary::build(&logs, ctx.cfg.vocab.min_freq, ctx.cfg.vocab.max_size)?;
    ctx.write(&a.out, &vocab.to_bytes())?;
    ctx.digest("vocab", &vocab.digest());
    ctx.note("size", vocab.len());
    ctx.note("coverage", adalog::tokenize::coverage(&vocab, &logs));
    println!("vocabulary of {} entries", vocab.len());
    ctx.finish(&a.out)
}

fn train(mut ctx: Ctx, a: crate::TrainArgs) -> Result<()> {
    let vocab = ctx.vocab(&a.vocab)?;
    let logs = ctx.clean_logs(&a.input)?;
    let model_cfg = ctx.cfg.model.with_vocab(vocab.len());
    let train_cfg = ctx.cfg.train.with_seed(ctx.cfg.seed);
    let seqs = encode_all(&vocab, &logs, model_cfg.max_len)?;
    let start = std::time::Instant::now();
    let mut log = String::new();
    let ckpt = train_with_progress(&seqs, &vocab, model_cfg, train_cfg, |epoch, loss| {
        let line = format!(
            "epoch={} loss={loss} seconds={:.1}",
            epoch + 1,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    })?;
    let bytes = ckpt.to_bytes();
    ctx.write(&a.out, &bytes)?;
    // wall times differ between runs, so the training log is not a tracked output
    let log_path = PathBuf::from(format!("{}.train.log", a.out.display()));
    std::fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    ctx.digest("checkpoint", &adalog::digest(&bytes));
    ctx.note("history", &ckpt.history);
    ctx.note("parameters", ckpt.params.parameter_count());
    ctx.finish(&a.out)
}

fn score(mut ctx: Ctx, a: crate::ScoreArgs) -> Result<()> {
    let vocab = ctx.vocab(&a.vocab)?;
    let ckpt = ctx.checkpoint(&a.checkpoint)?;
    let logs = ctx.clean_logs(&a.input)?;
    let strategy = ctx.cfg.score.strategy()?;
    let scorer = Scorer::new(&ckpt, &vocab)?;
    let seqs = encode_all(&vocab, &logs, ckpt.config().max_len)?;
    let reports = scorer.score_corpus(&seqs, strategy, ctx.cfg.seed, ctx.cfg.score.repeats)?;
    let header = ScoresHeader {
        checkpoint: scorer.checkpoint_digest().to_string(),
        vocab: vocab.digest(),
    };
    let mut out = Vec::new();
    write_scores(&mut out, &header, &reports)?;
    ctx.write(&a.out, &out)?;
    ctx.note("logs", reports.len());
    println!("scored {} logs with {strategy}", reports.len());
    ctx.finish(&a.out)
}

fn read_scores_file(ctx: &mut Ctx, path: &Path) -> Result<(ScoresHeader, Vec<ScoreRow>)> {
    let bytes = ctx.read(path)?;
    Ok(read_scores(&bytes[..])?)
}

/// Threshold over the scores in a scores file, stamped with its header.
fn calibrate_from_rows(header: &ScoresHeader, rows: &[ScoreRow], percentile: f64) -> Result<Threshold> {
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let t = select_threshold(&scores, percentile)?;
    Ok(Threshold {
        checkpoint_digest: header.checkpoint.clone(),
        vocab_digest: header.vocab.clone(),
        strategy: rows.first().map(|r| r.strategy).unwrap_or(t.strategy),
        ..t
    })
}

fn calibrate(mut ctx: Ctx, a: crate::CalibrateArgs) -> Result<()> {
    let (header, rows) = read_scores_file(&mut ctx, &a.scores)?;
    let t = calibrate_from_rows(&header, &rows, ctx.cfg.calibrate.percentile)?;
    ctx.write(&a.out, t.to_json().as_bytes())?;
    ctx.digest("checkpoint", &t.checkpoint_digest);
    ctx.digest("vocab", &t.vocab_digest);
    if let (Some(sp), Some(lp), Some(out)) = (&a.sweep_scores, &a.labels, &a.sweep_out) {
        let (test_header, test_rows) = read_scores_file(&mut ctx, sp)?;
        if test_header != header {
            return Err(CliError::digest(
                "sweep_scores",
                &header.checkpoint,
                &test_header.checkpoint,
            ));
        }
        let labels = ctx.labels(lp)?;
        if labels.len() != test_rows.len() {
            return Err(adalog::Error::LengthMismatch {
                left: test_rows.len(),
                right: labels.len(),
            }
            .into());
        }
        let normal: Vec<f64> = rows.iter().map(|r| r.score).collect();
        let test: Vec<(f64, Label)> = test_rows.iter().map(|r| r.score).zip(labels).collect();
        let table = sweep(&normal, &ctx.cfg.calibrate.sweep, &test)?;
        let mut buf = Vec::new();
        write_sweep(&mut buf, &table)?;
        ctx.write(out, &buf)?;
    }
    println!("threshold {} at percentile {}", t.value, t.percentile);
    ctx.finish(&a.out)
}

fn read_threshold(ctx: &mut Ctx, path: &Path) -> Result<Threshold> {
    let bytes = ctx.read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::new("Format", e.to_string()))?;
    Ok(Threshold::from_json(&text)?)
}

fn detect(mut ctx: Ctx, a: crate::DetectArgs) -> Result<()> {
    let (header, rows) = read_scores_file(&mut ctx, &a.scores)?;
    let t = read_threshold(&mut ctx, &a.threshold)?;
    if header.checkpoint != t.checkpoint_digest {
        return Err(CliError::digest("checkpoint", &t.checkpoint_digest, &header.checkpoint));
    }
    if header.vocab != t.vocab_digest {
        return Err(CliError::digest("vocab", &t.vocab_digest, &header.vocab));
    }
    if let Some(p) = &a.checkpoint {
        let bytes = ctx.read(p)?;
        let d = adalog::digest(&bytes);
        if d != t.checkpoint_digest {
            return Err(CliError::digest("checkpoint", &t.checkpoint_digest, &d));
        }
    }
    if let Some(p) = &a.vocab {
        let v = ctx.vocab(p)?;
        if v.digest() != t.vocab_digest {
            return Err(CliError::digest("vocab", &t.vocab_digest, &v.digest()));
        }
    }
    ctx.digest("checkpoint", &t.checkpoint_digest);
    ctx.digest("vocab", &t.vocab_digest);
    ctx.digest("threshold", &adalog::digest(t.to_json().as_bytes()));
    let verdicts: Vec<Verdict> = rows
        .iter()
        .map(|r| Verdict {
            raw_ref: Some(r.raw_ref.clone()),
            ..Verdict::from_score(r.score, t.value)
        })
        .collect();
    let mut out = Vec::new();
    write_verdicts(&mut out, &verdicts)?;
    ctx.write(&a.out, &out)?;
    let flagged = verdicts.iter().filter(|v| v.label == Label::Anomalous).count();
    ctx.note("flagged", flagged);
    println!("{flagged} of {} logs flagged", verdicts.len());
    ctx.finish(&a.out)
}

/// Labels from the last column of a verdicts file.
fn read_verdicts(ctx: &mut Ctx, path: &Path) -> Result<Vec<Verdict>> {
    let bytes = ctx.read(path)?;
    let bad = |m: String| CliError::new("Format", format!("verdicts file: {m}"));
    let mut lines = BufReader::new(&bytes[..]).lines();
    let header = lines.next().transpose().map_err(|e| bad(e.to_string()))?;
    if header.as_deref() != Some(adalog::detect::VERDICT_COLUMNS) {
        return Err(bad("missing column header".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let l = l.map_err(|e| bad(e.to_string()))?;
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(format!("row {}: expected 5 columns", i + 1)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("row {}: `{s}`", i + 1)));
            let label = Label::from_digit(f[4]).ok_or_else(|| bad(format!("row {}: label", i + 1)))?;
            Ok(Verdict {
                raw_ref: None,
                score: num(f[2])?,
                threshold_value: num(f[3])?,
                label,
            })
        })
        .collect()
}

fn eval(mut ctx: Ctx, a: crate::EvalArgs) -> Result<()> {
    let train = ctx.clean_logs(&a.train)?;
    let calibration = ctx.clean_logs(&a.calibration)?;
    let test = ctx.clean_logs(&a.test)?;
    check_leakage(&train, &calibration, &test)?;
    let verdicts = read_verdicts(&mut ctx, &a.verdicts)?;
    let labels = ctx.labels(&a.labels)?;
    if test.len() != verdicts.len() {
        return Err(adalog::Error::LengthMismatch {
            left: verdicts.len(),
            right: test.len(),
        }
        .into());
    }
    let m = metrics(&verdicts, &labels)?;
    if !labels.contains(&Label::Anomalous) {
        ctx.note("warning", "NoAnomaliesInTruth");
        eprintln!("{}", CliError::from(adalog::Error::NoAnomaliesInTruth).to_json());
    }
    let json = serde_json::to_string_pretty(&m).expect("metrics serialize") + "\n";
    ctx.write(&a.out, json.as_bytes())?;
    println!("precision {:.4} recall {:.4} f1 {:.4}", m.precision, m.recall, m.f1);
    ctx.finish(&a.out)
}

fn eval_data(ctx: &mut Ctx, d: &crate::EvalData) -> Result<(Vocabulary, EvalCorpora)> {
    let vocab = ctx.vocab(&d.vocab)?;
    let corpora = EvalCorpora {
        train: ctx.clean_logs(&d.train)?,
        calibration: ctx.clean_logs(&d.calibration)?,
        test: ctx.clean_logs(&d.test)?,
        test_labels: ctx.labels(&d.labels)?,
    };
    corpora.validate()?;
    Ok((vocab, corpora))
}

fn ablate_masking_cmd(mut ctx: Ctx, a: crate::AblateMaskingArgs) -> Result<()> {
    let ckpt = ctx.checkpoint(&a.checkpoint)?;
    let (vocab, corpora) = eval_data(&mut ctx, &a.data)?;
    let grid = ablate_masking(
        &ckpt,
        &vocab,
        &corpora,
        &ablation_strategies(),
        &ctx.cfg.calibrate.sweep,
        ctx.cfg.seed,
        ctx.cfg.score.repeats,
    )?;
    let mut out = Vec::new();
    grid.write_tsv(&mut out)?;
    ctx.write(&a.out, &out)?;
    ctx.note("best_f1", grid.best_f1());
    println!("grid best F1 {:.4}", grid.best_f1());
    ctx.finish(&a.out)
}

fn ablate_finetune_cmd(mut ctx: Ctx, a: crate::AblateFinetuneArgs) -> Result<()> {
    let (vocab, corpora) = eval_data(&mut ctx, &a.data)?;
    let (ckpt, report) = ablate_finetune(
        ctx.cfg.model.with_vocab(vocab.len()),
        ctx.cfg.train.with_seed(ctx.cfg.seed),
        &vocab,
        &corpora,
        ctx.cfg.calibrate.percentile,
        ctx.cfg.seed,
    )?;
    ctx.digest("checkpoint", &ckpt.digest());
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    ctx.write(&a.out, json.as_bytes())?;
    println!(
        "F1 untrained {:.4} trained {:.4}",
        report.untrained.f1, report.trained.f1
    );
    ctx.finish(&a.out)
}

fn heatmap(mut ctx: Ctx, a: crate::HeatmapArgs) -> Result<()> {
    let vocab = ctx.vocab(&a.vocab)?;
    let ckpt = ctx.checkpoint(&a.checkpoint)?;
    let logs = ctx.clean_logs(&a.input)?;
    let labels = match &a.labels {
        Some(p) => Some(ctx.labels(p)?),
        None => None,
    };
    let seqs = encode_all(&vocab, &logs, ckpt.config().max_len)?;
    let m = Scorer::new(&ckpt, &vocab)?.heatmap(&seqs, labels.as_deref())?;
    let mut grid = Vec::new();
    m.write_tsv(&mut grid)?;
    ctx.write(&a.out, &grid)?;
    let mut rows = Vec::new();
    m.write_rows_tsv(&mut rows)?;
    ctx.write(&PathBuf::from(format!("{}.rows.tsv", a.out.display())), &rows)?;
    if labels.is_some() {
        ctx.note("mean_normal", m.mean_for(Label::Normal));
        ctx.note("mean_anomalous", m.mean_for(Label::Anomalous));
    }
    println!("{} × {} heatmap", m.rows.len(), m.width);
    ctx.finish(&a.out)
}

fn show_config(mut ctx: Ctx, a: crate::ShowConfigArgs) -> Result<()> {
    let text = ctx.cfg.to_toml();
    match &a.out {
        Some(p) => {
            ctx.write(p, text.as_bytes())?;
            ctx.finish(p)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Outcome of replaying a manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RerunReport {
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
}

/// Replays the manifest's argv and compares each recorded output digest.
pub fn replay(manifest: &Path) -> Result<RerunReport> {
    let m = RunManifest::read(manifest)?;
    let argv = std::iter::once("adalog".to_string()).chain(m.argv.iter().cloned());
    crate::run(argv)?;
    let mut report = RerunReport {
        matched: Vec::new(),
        mismatched: Vec::new(),
    };
    for (path, expected) in &m.outputs {
        let found = std::fs::read(path)
            .map(|b| adalog::digest(&b))
            .unwrap_or_default();
        if &found == expected {
            report.matched.push(path.clone());
        } else {
            report.mismatched.push(path.clone());
        }
    }
    Ok(report)
}

fn rerun(a: crate::RerunArgs) -> Result<()> {
    let report = replay(&a.manifest)?;
    if !report.mismatched.is_empty() {
        return Err(CliError {
            field: report.mismatched.first().cloned(),
            ..CliError::new(
                "DigestMismatch",
                format!("outputs differ from the manifest: {}", report.mismatched.join(", ")),
            )
        });
    }
    println!("{} outputs reproduced byte for byte", report.matched.len());
    Ok(())
}
