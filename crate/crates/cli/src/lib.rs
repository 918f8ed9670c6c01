//! The `adalog` command line: one subcommand per pipeline stage.
//!
//! Every command reads its inputs, writes its artifacts plus a
//! `<artifact>.manifest.json`, and reports failures on stderr as a JSON object
//! with an error class.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::Overrides;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: kind.to_string(),
            field: None,
            message: message.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            field: Some(field.into()),
            ..Self::new("ConfigInvalid", message)
        }
    }

    pub fn missing(path: &Path, e: std::io::Error) -> Self {
        CliError {
            field: Some(path.display().to_string()),
            ..Self::new("MissingInput", format!("cannot read {}: {e}", path.display()))
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            field: Some(path.display().to_string()),
            ..Self::new("Io", format!("cannot write {}: {e}", path.display()))
        }
    }

    pub fn digest(field: &str, expected: &str, found: &str) -> Self {
        CliError {
            field: Some(field.to_string()),
            ..Self::new("DigestMismatch", format!("expected {expected}, found {found}"))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<adalog::Error> for CliError {
    fn from(e: adalog::Error) -> Self {
        match &e {
            adalog::Error::ConfigInvalid { field, message } => CliError::config(field.clone(), message.clone()),
            adalog::Error::VocabMismatch { expected, found } => CliError::digest("vocab", expected, found),
            adalog::Error::CheckpointMismatch { expected, found } => {
                CliError::digest("checkpoint", expected, found)
            }
            adalog::Error::Leakage(collisions) => CliError {
                field: Some("test".into()),
                ..CliError::new(
                    "Leakage",
                    format!(
                        "{e}; collisions: {}",
                        serde_json::to_string(collisions).expect("collisions serialize")
                    ),
                )
            },
            _ => CliError::new(e.kind(), e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adalog", version, about = "Log anomaly detection with a masked language model")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic raw log file with a parallel label file.
    Synth(SynthArgs),
    /// Strip timestamps, split compounds and substitute placeholders.
    Clean(CleanArgs),
    /// Deduplicate labeled clean logs and split them 70/15/15.
    Split(SplitArgs),
    /// Build the vocabulary from clean training logs.
    BuildVocab(BuildVocabArgs),
    /// Train the encoder on clean normal logs.
    Train(TrainArgs),
    /// Score clean logs.
    Score(ScoreArgs),
    /// Pick the threshold from normal validation scores.
    Calibrate(CalibrateArgs),
    /// Classify scored logs against a threshold.
    Detect(DetectArgs),
    /// Precision, recall and F1 of verdicts against labels.
    Eval(EvalArgs),
    /// Strategies × percentiles grid.
    AblateMasking(AblateMaskingArgs),
    /// Trained versus initialization-only encoder.
    AblateFinetune(AblateFinetuneArgs),
    /// Token-position probability matrix.
    Heatmap(HeatmapArgs),
    /// Re-execute a command from its manifest and compare outputs.
    Rerun(RerunArgs),
    /// Print the effective configuration as TOML.
    ShowConfig(ShowConfigArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Parallel label file to write.
    #[arg(long)]
    pub labels_out: PathBuf,
    #[arg(long)]
    pub templates: Option<usize>,
    #[arg(long)]
    pub normal: Option<usize>,
    #[arg(long)]
    pub anomalies: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Parallel labels for the input; filtered alongside dropped lines.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Scores of normal validation logs.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Scores of a labeled test set, for a percentile sweep.
    #[arg(long, requires_all = ["labels", "sweep_out"])]
    pub sweep_scores: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub sweep_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub threshold: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional checkpoint whose digest must match the threshold's.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Optional vocabulary whose digest must match the threshold's.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Clean partitions, checked for test logs leaking into training or calibration.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalData {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateMaskingArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: EvalData,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateFinetuneArgs {
    #[command(flatten)]
    pub data: EvalData,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Matrix file; row provenance goes to `<out>.rows.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct ShowConfigArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::new("Help", e.to_string())
        }
        _ => CliError::new("Usage", e.to_string()),
    })?;
    let argv = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    commands::dispatch(cli, argv)
}
