//! The `aoanet` command-line driver.
//!
//! Every command writes line-delimited JSON (or, for `ablate`, a table) to
//! the given writer and returns a [`CliError`] carrying the process exit
//! code on failure.

pub mod commands;
pub mod manifest;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use aoa_core::train::Phase;
use aoa_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "aoanet", version, about = "AoA captioning: data, training, evaluation, ablation and gradient checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic dataset (features, captions, splits) to a directory.
    GenData {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        images: usize,
        /// Objects per image.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Feature width.
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a model and writes checkpoints, the epoch log and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "full")]
        phase: Phase,
        #[arg(long, required_unless_present = "print_config")]
        out: Option<PathBuf>,
        /// Dataset directory; without it the data is generated from the
        /// `data_seed`, `images` and `objects` keys.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to start from; required for `--phase scst`.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Allows the LSTM + AoA decoder stack.
        #[arg(long)]
        experimental: bool,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        threads: Option<usize>,
        /// Prints the effective configuration, defaults included, and exits.
        #[arg(long)]
        print_config: bool,
    },
    /// Scores a checkpoint on one split and prints `{B1, B4, R, C}`.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        beam: usize,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long, default_value_t = 16)]
        max_len: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Greedily captions one image, optionally dumping attention and gates.
    Caption {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        image_id: String,
        #[arg(long, default_value_t = 16)]
        max_len: usize,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Trains every row of a configuration matrix on shared data and prints
    /// a comparison table.
    Ablate {
        #[arg(long)]
        config_matrix: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also writes one JSON result per row to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Runs the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Dimension { .. } | Error::EmptyInput(_) | Error::Contract(_) | Error::Config(_) => {
                EXIT_CONFIG
            }
            Error::Format { .. } | Error::Data(_) | Error::Io { .. } | Error::Reward { .. } => EXIT_DATA,
            Error::Numeric { .. } => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData { seed, images, k, dim, out: dir } => {
            commands::gen_data(*seed, *images, *k, *dim, dir, out)
        }
        Command::Train {
            config,
            phase,
            out: dir,
            data,
            init,
            experimental,
            threads,
            print_config,
        } => commands::train(
            &commands::TrainArgs {
                config,
                phase: *phase,
                out: dir.as_deref(),
                data: data.as_deref(),
                init: init.as_deref(),
                experimental: *experimental,
                threads: *threads,
                print_config: *print_config,
            },
            out,
        ),
        Command::Eval { ckpt, data, beam, split, max_len, threads } => {
            commands::eval(ckpt, data, *beam, *split, *max_len, *threads, out)
        }
        Command::Caption { ckpt, data, image_id, max_len, trace } => {
            commands::caption(ckpt, data, image_id, *max_len, trace.as_deref(), out)
        }
        Command::Ablate { config_matrix, data, out: results, threads } => {
            commands::ablate(config_matrix, data.as_deref(), results.as_deref(), *threads, out)
        }
        Command::Gradcheck { seed } => commands::gradcheck(*seed, out),
    }
}
