//! `nahlab`: generate data, pre-train, fine-tune, run the equivalent-source
//! baseline and report.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 data generation
//! failure, 4 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nah_core::NahError;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<NahError> for CliError {
    fn from(e: NahError) -> Self {
        let root = match &e {
            NahError::Sample { source, .. } => source.as_ref(),
            other => other,
        };
        let code = match root {
            NahError::EmptyModeSet { .. } | NahError::Eigensolver(_) | NahError::DegenerateField | NahError::SingularGreen => 3,
            NahError::NonFiniteLoss { .. }
            | NahError::NonFiniteGradient(_)
            | NahError::SolverFailure(_)
            | NahError::NoGraph
            | NahError::BackwardTwice => 4,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nahlab", version, about = "Near-field acoustic holography with transfer learning")]
struct Cli {
    /// TOML run configuration; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Rect,
    Ood,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Synthesize a plate dataset.
    GenData {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        modes_per_plate: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Supervised pre-training on a rectangular-plate dataset.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the state saved in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Physics-informed fine-tuning on each sample of a dataset.
    Finetune {
        /// Pre-trained checkpoint; ignored with --random-init.
        #[arg(long, required_unless_present = "random_init")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Start from freshly initialized weights instead of the checkpoint.
        #[arg(long)]
        random_init: bool,
    },
    /// Compressive equivalent-source reconstruction of each sample.
    Cesm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Score a checkpoint by direct inference and/or merge record files.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        data: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        /// Record CSVs to merge into the output.
        #[arg(long, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary table, CDFs and success histograms from record files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        records: Vec<PathBuf>,
        /// Timing CSVs supplying per-record runtimes.
        #[arg(long, num_args = 1..)]
        timings: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs;
    nah_core::par::with_jobs(jobs, move || match cli.cmd {
        Cmd::GenData {
            family,
            count,
            seed,
            modes_per_plate,
            out,
        } => {
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            if modes_per_plate.is_some() {
                cfg.data.modes_per_plate = modes_per_plate;
            }
            match (family, count) {
                (FamilyArg::Rect, Some(c)) => cfg.data.rect_count = c,
                (FamilyArg::Ood, Some(c)) => cfg.data.ood_count = c,
                _ => {}
            }
            commands::gen_data(&cfg, family, out)
        }
        Cmd::Pretrain {
            data,
            out,
            max_epochs,
            seed,
            resume,
        } => {
            if let Some(m) = max_epochs {
                cfg.pretrain.max_epochs = m;
            }
            if let Some(s) = seed {
                cfg.model_seed = s;
                cfg.pretrain.seed = s;
            }
            commands::pretrain(&cfg, &data, out, resume)
        }
        Cmd::Finetune {
            checkpoint,
            data,
            out,
            samples,
            epochs,
            random_init,
        } => {
            if let Some(e) = epochs {
                cfg.finetune.epochs = e;
            }
            let init = if random_init { None } else { checkpoint };
            commands::finetune(&cfg, init.as_deref(), &data, out, samples)
        }
        Cmd::Cesm { data, out, samples } => commands::cesm(&cfg, &data, out, samples),
        Cmd::Eval {
            checkpoint,
            data,
            samples,
            records,
            out,
        } => commands::eval(&cfg, checkpoint.as_deref(), data.as_deref(), samples, &records, &out),
        Cmd::Report { records, timings, out } => commands::report(&records, &timings, &out),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
