//! Command-line interface: score predictions, generate synthetic data, run
//! training experiments, and compare the two losses.
//!
//! Exit codes: 0 on success, 2 for input or validation problems, 3 for
//! numerical failures (a training run aborted on non-finite values). Log
//! verbosity is controlled by the `SOFTCE_LOG` environment variable
//! (`error`, `warn`, `info`, `debug`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::answers::AnswerError;
use crate::data::{self, DataError};
use crate::losses::LossMode;
use crate::metric::{self, AccuracyReport, MetricError};
use crate::synth::{self, SynthConfig, SynthError};
use crate::trainer::{self, Arch, TrainConfig, TrainError, TrainOutcome};

/// Environment variable controlling log verbosity.
pub const LOG_ENV_VAR: &str = "SOFTCE_LOG";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Train(TrainError::NonFinite { .. }) => EXIT_NUMERIC,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "softce",
    version,
    about = "Soft cross entropy training and consensus-accuracy scoring for VQA-style answer sets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a predictions file against an annotations file
    Eval(EvalArgs),
    /// Generate a synthetic annotator-disagreement dataset directory
    Synth(SynthArgs),
    /// Train one classifier and write its curve and final predictions
    Train(TrainArgs),
    /// Train both losses across seeds and print a comparison summary
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotation JSON file
    #[arg(long)]
    pub annotations: PathBuf,
    /// Prediction JSON file
    #[arg(long)]
    pub predictions: PathBuf,
    /// Print the report as JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config JSON file (missing fields take defaults)
    #[arg(long)]
    pub config: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`
    #[arg(long)]
    pub data: PathBuf,
    /// Loss to train with: "standard" or "soft"
    #[arg(long)]
    pub loss: LossMode,
    #[arg(long)]
    pub epochs: u32,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for the curve CSV and prediction JSON
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden layer width; omit for a linear model
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Dataset directory written by `synth`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: u32,
    /// Training seeds, comma separated (e.g. `--seeds 1,2,3`)
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    /// Output directory for per-run curve CSVs
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden layer width; omit for a linear model
    #[arg(long)]
    pub hidden: Option<usize>,
}

/// Initialize env_logger from [`LOG_ENV_VAR`]; safe to call more than once.
pub fn init_logging() {
    let _ =
        env_logger::Builder::from_env(env_logger::Env::default().filter_or(LOG_ENV_VAR, "info"))
            .format_timestamp(None)
            .try_init();
}

/// Dispatch a parsed command line and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Eval(args) => run_eval(&args),
        Command::Synth(args) => run_synth(&args),
        Command::Train(args) => run_train(&args),
        Command::Compare(args) => run_compare(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

pub fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let annotations = data::load_annotations(&args.annotations)?;
    let predictions = data::load_predictions(&args.predictions)?;
    let report = metric::evaluate(&predictions, &annotations)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serialization")
        );
    } else {
        print!("{}", format_report(&report));
    }
    Ok(())
}

fn format_report(report: &AccuracyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}{:>10}{:>12}", "Type", "Accuracy", "Questions");
    let rows = [
        ("All", report.overall, report.counts.total()),
        ("Y/N", report.yes_no, report.counts.yes_no),
        ("Num", report.number, report.counts.number),
        ("Other", report.other, report.counts.other),
    ];
    for (label, value, count) in rows {
        let _ = writeln!(out, "{:<8}{:>10.2}{:>12}", label, value * 100.0, count);
    }
    out
}

pub fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let config: SynthConfig = serde_json::from_str(&text).map_err(|source| {
        CliError::Data(DataError::Json {
            path: args.config.clone(),
            source,
        })
    })?;
    config.validate()?;
    let vocab = config.vocabulary()?;
    let (train, val) = synth::generate(&config)?;
    data::save_dataset_dir(&args.out, &vocab, &train, &val)?;
    let echo = serde_json::to_string_pretty(&config).expect("config serialization");
    std::fs::write(args.out.join("synth_config.json"), echo).map_err(|source| CliError::Io {
        path: args.out.join("synth_config.json"),
        source,
    })?;
    println!(
        "wrote {} train and {} validation questions over {} classes to {}",
        train.len(),
        val.len(),
        config.num_classes,
        args.out.display()
    );
    Ok(())
}

fn train_config(
    loss_mode: LossMode,
    epochs: u32,
    seed: u64,
    args_batch: usize,
    args_lr: f64,
) -> TrainConfig {
    TrainConfig {
        loss_mode,
        batch_size: args_batch,
        learning_rate: args_lr,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn arch_for(hidden: Option<usize>) -> Arch {
    match hidden {
        Some(hidden_dim) => Arch::Mlp { hidden_dim },
        None => Arch::Linear,
    }
}

fn curve_file(out: &Path, mode: LossMode, seed: u64) -> PathBuf {
    out.join(format!("curves_{mode}_seed{seed}.csv"))
}

pub fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    let (vocab, train_set, val_set) = data::load_dataset_dir(&args.data)?;
    let config = train_config(args.loss, args.epochs, args.seed, args.batch_size, args.lr);
    let outcome = trainer::train(&train_set, &val_set, &vocab, arch_for(args.hidden), &config)?;
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    let curve_path = curve_file(&args.out, args.loss, args.seed);
    if !outcome.curve.is_empty() {
        data::save_curves(&curve_path, &outcome.curve)?;
        let predictions = trainer::predict_answers(&outcome.params, &val_set, &vocab)?;
        let predictions_path = args
            .out
            .join(format!("predictions_{}_seed{}.json", args.loss, args.seed));
        data::save_predictions(&predictions_path, &predictions)?;
        let best = best_epoch(&outcome);
        let last = outcome.curve.last().expect("non-empty curve");
        println!(
            "{} loss, seed {}: final val acc {:.2} (best {:.2} at epoch {}); curves in {}",
            args.loss,
            args.seed,
            last.val_accuracy.overall * 100.0,
            outcome.curve[best].val_accuracy.overall * 100.0,
            outcome.curve[best].epoch,
            curve_path.display()
        );
    } else {
        println!(
            "{} loss, seed {}: zero epochs requested, nothing written",
            args.loss, args.seed
        );
    }
    Ok(())
}

/// Index of the epoch with the highest overall validation accuracy (the
/// earliest such epoch on ties).
fn best_epoch(outcome: &TrainOutcome) -> usize {
    let mut best = 0;
    for (i, point) in outcome.curve.iter().enumerate().skip(1) {
        if point.val_accuracy.overall > outcome.curve[best].val_accuracy.overall {
            best = i;
        }
    }
    best
}

/// Per-mode accuracy summary over seeds: values are taken at each run's
/// best-overall epoch.
#[derive(Debug, Clone)]
pub struct ModeSummary {
    pub mode: LossMode,
    /// Best-epoch reports, one per seed, in seed order.
    pub best_reports: Vec<AccuracyReport>,
}

impl ModeSummary {
    pub fn mean_overall(&self) -> f64 {
        self.best_reports.iter().map(|r| r.overall).sum::<f64>() / self.best_reports.len() as f64
    }

    fn stats(&self, pick: fn(&AccuracyReport) -> f64) -> (f64, f64) {
        let values: Vec<f64> = self.best_reports.iter().map(pick).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        (mean, (max - min) / 2.0)
    }
}

/// Result of a `compare` run: per-mode summaries and the discrepancy epochs
/// detected in each standard-loss curve CSV.
#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub standard: ModeSummary,
    pub soft: ModeSummary,
    /// `(seed, epochs)` pairs for standard-mode runs.
    pub discrepancies: Vec<(u64, Vec<u32>)>,
}

impl CompareSummary {
    /// Soft minus standard mean best overall accuracy.
    pub fn overall_delta(&self) -> f64 {
        self.soft.mean_overall() - self.standard.mean_overall()
    }
}

pub fn run_compare(args: &CompareArgs) -> Result<(), CliError> {
    let summary = compare_modes(args)?;
    print!("{}", format_compare(&summary));
    Ok(())
}

fn compare_modes(args: &CompareArgs) -> Result<CompareSummary, CliError> {
    let (vocab, train_set, val_set) = data::load_dataset_dir(&args.data)?;
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    let arch = arch_for(args.hidden);
    let mut summaries = Vec::new();
    let mut discrepancies = Vec::new();
    for mode in [LossMode::Standard, LossMode::Soft] {
        let mut best_reports = Vec::new();
        for &seed in &args.seeds {
            let config = train_config(mode, args.epochs, seed, args.batch_size, args.lr);
            let outcome = trainer::train(&train_set, &val_set, &vocab, arch, &config)?;
            let path = curve_file(&args.out, mode, seed);
            data::save_curves(&path, &outcome.curve)?;
            best_reports.push(outcome.curve[best_epoch(&outcome)].val_accuracy);
            if mode == LossMode::Standard {
                // detect from the file we just wrote, same as any reader would
                let rows = data::load_curves(&path)?;
                discrepancies.push((seed, trainer::loss_accuracy_discrepancy_epochs(&rows)));
            }
        }
        summaries.push(ModeSummary { mode, best_reports });
    }
    let soft = summaries.pop().expect("two modes");
    let standard = summaries.pop().expect("two modes");
    Ok(CompareSummary {
        standard,
        soft,
        discrepancies,
    })
}

fn format_compare(summary: &CompareSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Best validation accuracy, mean +/- half-range over {} seed(s), percent:",
        summary.standard.best_reports.len()
    );
    let _ = writeln!(
        out,
        "{:<10}{:>16}{:>16}{:>16}{:>16}",
        "Loss", "All", "Y/N", "Num", "Other"
    );
    for mode in [&summary.standard, &summary.soft] {
        let cells: Vec<String> = [
            mode.stats(|r| r.overall),
            mode.stats(|r| r.yes_no),
            mode.stats(|r| r.number),
            mode.stats(|r| r.other),
        ]
        .iter()
        .map(|(mean, spread)| format!("{:.2} +/- {:.2}", mean * 100.0, spread * 100.0))
        .collect();
        let _ = writeln!(
            out,
            "{:<10}{:>16}{:>16}{:>16}{:>16}",
            mode.mode.to_string(),
            cells[0],
            cells[1],
            cells[2],
            cells[3]
        );
    }
    let _ = writeln!(out, "delta     {:>+16.2}", summary.overall_delta() * 100.0);
    for (seed, epochs) in &summary.discrepancies {
        if epochs.is_empty() {
            let _ = writeln!(
                out,
                "standard seed {seed}: no epochs with rising validation loss and accuracy"
            );
        } else {
            let list = epochs
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(", ");
            let _ = writeln!(
                out,
                "standard seed {seed}: validation loss and accuracy rose together at epoch(s) {list}"
            );
        }
    }
    out
}
