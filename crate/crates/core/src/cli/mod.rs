//! The `sce` command line.
//!
//! ```text
//! sce synth    [--config FILE] [--set KEY=VALUE]...
//! sce split    ...
//! sce train    --task event|conflict [--fraction F] ...
//! sce infer    [--force-conflict] ...
//! sce narrate  [--strategy direct|chain_of_thought|chain_of_thought_repeat] ...
//! sce evaluate [--subset all|sce] ...
//! ```
//!
//! Exit codes: 0 success, 2 config or usage error, 3 I/O error, 4 numeric
//! failure, 5 incompatible artifact. See [`config`] for the config grammar
//! and [`records`] for output schemas.

mod commands;
pub mod config;
pub mod records;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::contrastive::ContrastiveError;
use crate::data::DataError;
use crate::encoders::EncoderError;
use crate::narrative::{BackendError, PromptStrategy};
use crate::synth::SynthError;
use crate::TrainError;

pub use commands::{cmd_evaluate, cmd_infer, cmd_narrate, cmd_split, cmd_synth, cmd_train, sha256_file};
pub use config::{Subset, Task};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("incompatible artifact: {0}")]
    Artifact(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Artifact(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let m = e.to_string();
        match e {
            DataError::Io { .. } | DataError::MissingFile(_) | DataError::Image { .. } => CliError::Io(m),
            DataError::VocabularyMismatch { .. } | DataError::Malformed { .. } => CliError::Artifact(m),
            _ => CliError::Config(m),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        let m = e.to_string();
        match e {
            EncoderError::Io(..) => CliError::Io(m),
            EncoderError::Config(_) | EncoderError::EmptyText(_) => CliError::Config(m),
            EncoderError::NonFinite => CliError::Numeric(m),
            EncoderError::Shape(_)
            | EncoderError::MissingParam(_)
            | EncoderError::Geometry { .. }
            | EncoderError::Checkpoint(_) => CliError::Artifact(m),
        }
    }
}

impl From<ContrastiveError> for CliError {
    fn from(e: ContrastiveError) -> Self {
        match e {
            ContrastiveError::Encoder(inner) => inner.into(),
            ContrastiveError::ZeroNorm | ContrastiveError::NonFinite => CliError::Numeric(e.to_string()),
            ContrastiveError::Shape(_) => CliError::Artifact(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Encoder(inner) => inner.into(),
            TrainError::Data(inner) => inner.into(),
            TrainError::Contrastive(inner) => inner.into(),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } => CliError::Io(e.to_string()),
            SynthError::Data(inner) => inner.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sce", version, about = "Safety-critical driving event classification and description")]
pub struct Cli {
    /// TOML config file; each command reads its own table.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a key of the command's table, e.g. `--set epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset and its manifest.
    Synth,
    /// Assign train/test/val splits in the manifest.
    Split,
    /// Train the event-type classifier or the conflict-type matcher.
    Train {
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Class-covering share of the train split, in (0, 1].
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Predict event types, then conflict types for predicted SCEs.
    Infer {
        /// Match conflict types for every event regardless of event type.
        #[arg(long)]
        force_conflict: bool,
    },
    /// Generate narratives from predictions.
    Narrate {
        #[arg(long)]
        strategy: Option<PromptStrategy>,
    },
    /// Score predictions and/or narratives against ground truth.
    Evaluate {
        #[arg(long, value_enum)]
        subset: Option<Subset>,
    },
}

/// Run one command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let mut sets = cli.sets;
    let file = cli.config.as_deref();
    let result = match cli.command {
        Command::Synth => config::load_section(file, "synth", &sets).and_then(|c| cmd_synth(&c)),
        Command::Split => config::load_section(file, "split", &sets).and_then(|c| cmd_split(&c)),
        Command::Train { task, fraction } => {
            if let Some(t) = task {
                sets.push(format!("task=\"{}\"", t.key()));
            }
            if let Some(f) = fraction {
                sets.push(format!("fraction={f:?}"));
            }
            config::load_section(file, "train", &sets).and_then(|c| cmd_train(&c))
        }
        Command::Infer { force_conflict } => {
            if force_conflict {
                sets.push("force_conflict=true".into());
            }
            config::load_section(file, "infer", &sets).and_then(|c| cmd_infer(&c))
        }
        Command::Narrate { strategy } => {
            if let Some(s) = strategy {
                sets.push(format!("strategy=\"{}\"", s.key()));
            }
            config::load_section(file, "narrate", &sets).and_then(|c| cmd_narrate(&c))
        }
        Command::Evaluate { subset } => {
            if let Some(s) = subset {
                sets.push(format!("subset=\"{}\"", if s == Subset::Sce { "sce" } else { "all" }));
            }
            config::load_section(file, "evaluate", &sets).and_then(|c| cmd_evaluate(&c))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sce: {e}");
            e.exit_code()
        }
    }
}

/// Parse `args` (program name first) and run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
