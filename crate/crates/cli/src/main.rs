use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fisherseg::harness::{self, Config, SweepAxis};

/// Balanced multi-modal segmentation experiments on synthetic scenes.
#[derive(Parser)]
#[command(name = "fisherseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Directory with `train/` and `eval/` datasets.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long = "lambda-p", value_name = "X")]
    lambda_p: Option<f64>,
    #[arg(long = "lambda-f", value_name = "X")]
    lambda_f: Option<f64>,
    /// Train on every modality at every step.
    #[arg(long)]
    no_dropout: bool,
    /// Sets both regularization weights to zero.
    #[arg(long)]
    no_reg: bool,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes train and eval datasets.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR", default_value = "data")]
        out: PathBuf,
    },
    /// Trains a model, writing metrics.jsonl and model.ckpt.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Scores a checkpoint on every modality combination.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Dataset directory (holding manifest.json).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Comma-separated subset of the checkpoint's modalities.
        #[arg(long, value_delimiter = ',')]
        modalities: Vec<String>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Trains once per value of one regularization weight.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
        /// lambda_p or lambda_f.
        #[arg(long, default_value = "lambda_p")]
        axis: String,
        /// Comma-separated grid; defaults to the standard grid of the axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_name = "DIR", default_value = "sweep")]
        out: PathBuf,
    },
    /// Converts metrics files into CSV curves.
    Plotdata {
        /// metrics.jsonl files, one per run.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "plots")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn apply_flags(config: &mut Config, flags: &TrainFlags) {
    let t = &mut config.train;
    if let Some(dir) = &flags.data {
        t.data_dir = dir.clone();
    }
    if let Some(v) = flags.lambda_p {
        t.lambda_p = v;
    }
    if let Some(v) = flags.lambda_f {
        t.lambda_f = v;
    }
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if flags.no_dropout {
        t.dropout = false;
    }
    if flags.no_reg {
        t.lambda_p = 0.0;
        t.lambda_f = 0.0;
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let config = load_config(&common)?;
            let (train, eval) = harness::cmd_generate(&config, &out)?;
            println!("train {} samples  sha256 {train}", config.split.train);
            println!("eval  {} samples  sha256 {eval}", config.split.eval);
        }
        Command::Train { common, flags, out } => {
            let mut config = load_config(&common)?;
            apply_flags(&mut config, &flags);
            if let Some(out) = out {
                config.train.out_dir = out;
            }
            let outcome = harness::cmd_train(&config)?;
            print!("{}", harness::format_table(&outcome.final_eval));
            if let Some(gap) = outcome.final_report.gap_ratio {
                println!("gap_ratio {gap:.4}");
            }
            println!("checkpoint {}", show(&outcome.checkpoint_path));
            println!("metrics    {}", show(&outcome.metrics_path));
        }
        Command::Eval {
            checkpoint,
            data,
            modalities,
            out,
        } => {
            let chosen = (!modalities.is_empty()).then_some(modalities.as_slice());
            let summary = harness::cmd_eval(&checkpoint, &data, chosen, &out)?;
            print!("{}", harness::format_table(&summary));
        }
        Command::Sweep {
            common,
            flags,
            axis,
            values,
            out,
        } => {
            let mut config = load_config(&common)?;
            apply_flags(&mut config, &flags);
            let axis: SweepAxis = axis.parse()?;
            let grid = (!values.is_empty()).then_some(values.as_slice());
            let rows = harness::cmd_sweep(&config, axis, grid, &out)?;
            print!("{}", harness::format_sweep_table(axis, &rows).0);
        }
        Command::Plotdata { metrics, out } => {
            let files = harness::cmd_plotdata(&metrics, &out).context("plotdata")?;
            println!("{}\n{}", show(&files.fisher), show(&files.miou));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
