//! Command-line experiments: dataset generation, training, evaluation, block-count
//! sweeps and comparison tables.

mod cli;
mod commands;
mod config;
mod images;
mod plot;
mod report;

use std::ffi::OsString;

use clap::Parser;

pub use cli::Cli;
pub use commands::{run_training, CHECKPOINT_FILE, METRICS_FILE};
pub use config::FileConfig;
pub use images::{overlay, CLASS_COLORS};
pub use report::{dice_table, published_reference_block, DatasetInfo, EvalReport, RunMetrics};

/// Exit status for invalid invocations detected before any computation.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(crate::Error),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn execute(cli: &Cli) -> CliResult<()> {
    use cli::Command;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::SweepBlocks(a) => commands::sweep_blocks(a),
        Command::Compare(a) => commands::compare(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
