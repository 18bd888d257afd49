//! The `tcn` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error (including a failed
//! gradient check), 2 data error, 3 capacity error. Diagnostics go to stderr;
//! data goes to files or stdout.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tcn_core::data::LabelColumn;
use tcn_core::{Approach, CombinationSpec};

use crate::commands::{EvalArgs, TransformArgs};
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "tcn",
    version,
    about = "Feature-combination networks for tabular classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ApproachArg {
    Mult,
    Pairwise,
}

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Mult => Approach::Multiplicative,
            ApproachArg::Pairwise => Approach::PairwiseSum,
        }
    }
}

/// Flags that override the matching config keys.
#[derive(Debug, Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (overrides "dataset").
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory (overrides "output_dir").
    #[arg(long)]
    output: Option<PathBuf>,
    /// Label column name or zero-based index.
    #[arg(long)]
    label_column: Option<String>,
    /// Subset size.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    approach: Option<ApproachArg>,
    /// Keep the original features next to the combined ones.
    #[arg(long)]
    augment_original: bool,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.dataset = Some(p.clone());
        }
        if let Some(p) = &self.output {
            cfg.output_dir = p.clone();
        }
        if let Some(l) = &self.label_column {
            cfg.label_column = LabelColumn::parse(l);
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(a) = self.approach {
            cfg.approach = a.into();
        }
        if self.augment_original {
            cfg.augment_original = true;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the combined-feature version of a CSV.
    Transform {
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "label")]
        label_column: String,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, value_enum, default_value = "mult")]
        approach: ApproachArg,
        #[arg(long)]
        augment_original: bool,
        /// The input has no header row.
        #[arg(long)]
        no_header: bool,
    },
    /// Train a model and write checkpoint.json and results.json.
    Train(Overrides),
    /// Print metrics of a checkpoint on a CSV file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the label column recorded in the checkpoint.
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        no_header: bool,
    },
    /// Compare backpropagation with finite differences.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Transform {
            input,
            output,
            label_column,
            m,
            approach,
            augment_original,
            no_header,
        } => commands::transform(&TransformArgs {
            input,
            output,
            label_column: LabelColumn::parse(&label_column),
            has_header: !no_header,
            spec: CombinationSpec {
                m,
                approach: approach.into(),
                augment_original,
                ..CombinationSpec::default()
            },
        }),
        Command::Train(overrides) => commands::train(&overrides.resolve()?),
        Command::Eval {
            checkpoint,
            input,
            label_column,
            no_header,
        } => commands::eval(&EvalArgs {
            checkpoint,
            input,
            label_column: label_column.as_deref().map(LabelColumn::parse),
            has_header: !no_header,
        }),
        Command::Gradcheck {
            overrides,
            corrupt_gradient,
        } => commands::gradcheck(&overrides.resolve()?, corrupt_gradient),
    }
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
