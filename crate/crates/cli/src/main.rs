//! `extentlab` command line.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or input error. Errors
//! are written to stderr as one JSON object `{"code","message"}`.

mod commands;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "extentlab", version, about = "Semantic extents for relation classification")]
pub struct Cli {
    /// Root for relative paths.
    #[arg(long, env = "EXTENTLAB_DATA_DIR", global = true)]
    pub data_dir: Option<PathBuf>,

    /// Seed for every random choice; recorded in each report.
    #[arg(long, default_value_t = 13, global = true)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Structured,
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Expanding,
    Reductive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Dev,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct Selection {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split file; without it every sample is used.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Which part of the split to use.
    #[arg(long, value_enum, default_value_t = Part::Test)]
    pub on: Part,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize an input corpus file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign samples to train/dev/test.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// Existing split whose assignments are kept.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.1, 0.1])]
        ratio: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label and syntactic-class counts, overall and per genre.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
    },
    /// Train the linear bag-of-words decider.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Training configuration (JSON); `--seed` overrides its seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// F1 of a model on the selected samples.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        select: Selection,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-sample full-sentence predictions (JSON Lines).
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
    },
    /// Semantic extents of a model on the selected samples.
    Extents {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        select: Selection,
        #[arg(long, value_enum, default_value_t = Mode::Expanding)]
        mode: Mode,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 3)]
        beam_width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement between two extent files (machine or exported human records).
    Agree {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
    },
    /// Confidence and F1 split by semantic class and extent size.
    Breakdown {
        #[arg(long)]
        extents: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
    },
    /// Semantic-class histograms for local and sentence-level samples.
    Histogram {
        #[arg(long)]
        extents: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Plot-ready `class,count,group` table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Accuracy on adversarial groups.
    Adversarial {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Structured)]
        format: Format,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        corpus: PathBuf,
        /// Decider for label preselection.
        #[arg(long)]
        model: PathBuf,
        /// Annotation record log.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return;
        }
        Err(e) => CliError::usage(e.to_string()).exit(),
    };
    if let Err(e) = commands::run(cli) {
        e.exit();
    }
}
