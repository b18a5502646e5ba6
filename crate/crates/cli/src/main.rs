//! Command-line front end: synth | train | crossval | eval | compare | roc.
//!
//! Configs and synth specs are JSON files passed by path; `--seed` and
//! `--out` override the stored values. Exit codes: 0 success, 2 config or
//! data error, 3 training divergence, 4 incompatible comparison.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use bmnet::data::SynthSpec;
use bmnet::experiment::{
    run_ablation, run_compare, run_crossval, run_eval, run_roc, run_synth, run_train,
    CompareMode, ExperimentConfig, ExperimentError,
};

#[derive(Parser)]
#[command(name = "bmnet", version, about = "Train and evaluate BMNet on ROI feature tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature CSV from a spec file.
    Synth {
        /// JSON file holding the synthesis spec.
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a single model from an experiment config.
    Train {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run stratified k-fold cross-validation (optionally the full
    /// six-variant ablation grid).
    Crossval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run all six ablation variants and emit the comparison table.
        #[arg(long)]
        ablation: bool,
    },
    /// Score a saved checkpoint against a feature CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory for report.json and scores.csv (otherwise stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistically compare two finished runs.
    Compare {
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Export a run's ROC curve as fpr,tpr,threshold rows.
    Roc {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Paired t-test over fold AUCs of two crossval runs.
    T,
    /// DeLong test over a shared held-out test set.
    Delong,
}

fn load_config(
    path: &PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Synth { spec, out, seed } => {
            let text = std::fs::read_to_string(&spec)?;
            let mut spec: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("bad synth spec: {e}")))?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let summary = run_synth(&spec, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let result = run_train(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Crossval {
            config,
            seed,
            out,
            ablation,
        } => {
            let cfg = load_config(&config, seed, out)?;
            if ablation {
                let table = run_ablation(&cfg)?;
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                let output = run_crossval(&cfg)?;
                println!("{}", serde_json::to_string_pretty(&output)?);
            }
        }
        Command::Eval {
            checkpoint,
            data,
            out,
        } => {
            let report = run_eval(&checkpoint, &data, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare { run_a, run_b, mode } => {
            let mode = match mode {
                Mode::T => CompareMode::PairedT,
                Mode::Delong => CompareMode::Delong,
            };
            let result = run_compare(&run_a, &run_b, mode)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Roc { run, out } => {
            let (points, auc) = run_roc(&run, &out)?;
            println!("{{\"points\": {points}, \"auc\": {auc}}}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
