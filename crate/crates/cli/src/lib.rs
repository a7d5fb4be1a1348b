//! `tkp`: tables, trials, calibration, optics reports and the guessing game.
//!
//! Everything runs through [`run`], which takes explicit IO handles so the
//! binary and the tests share one code path.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod config;
pub mod parse;
pub mod report;

mod commands;

pub use commands::run_trials_parallel;
pub use report::Format;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for bad flags, bad config or invalid values.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for a calibration target outside the achievable interval.
pub const EXIT_UNREACHABLE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Unreachable(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Unreachable(_) => EXIT_UNREACHABLE,
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
        }
    }
}

impl From<tkp_core::protocol::ProtocolError> for CliError {
    fn from(e: tkp_core::protocol::ProtocolError) -> Self {
        match e {
            tkp_core::protocol::ProtocolError::Unreachable { .. } => CliError::Unreachable(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<tkp_core::optics::OpticsError> for CliError {
    fn from(e: tkp_core::optics::OpticsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tkp", version, about = "Mean King retrodiction simulator")]
pub struct Cli {
    /// Extra diagnostics on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic outcome table for every basis choice.
    Table {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo trials with counts, reliability and confusion matrix.
    Trials {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Shots per listed basis, or in total with `--b-list random`.
        #[arg(long)]
        shots: Option<u64>,
        /// Comma-separated bases, `all` (default) or `random`.
        #[arg(long)]
        b_list: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Noise parameter that yields a target analytic reliability.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        target: f64,
        /// werner, white or optics.
        #[arg(long, default_value = "white")]
        family: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Hong-Ou-Mandel scan through the interfering PPBS.
    Hom {
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long, default_value_t = 161)]
        points: usize,
        /// Scan half-range in widths.
        #[arg(long, default_value_t = 8.0)]
        span: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Computational-basis truth table of the post-selected CNOT.
    TruthTable {
        #[arg(long = "mode-match", short = 'm', default_value_t = 1.0)]
        mode_match: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Coincidence distribution of the Bell analyzer for each Bell input.
    BellTable {
        #[arg(long = "mode-match", short = 'm', default_value_t = 1.0)]
        mode_match: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rounds of the King choosing a basis and Alice guessing it.
    Game {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        shots_per_round: Option<u64>,
        /// Scripted King: comma-separated bases or `random`.
        #[arg(long)]
        b_list: Option<String>,
        /// Prompt for the King's choice each round.
        #[arg(long, conflicts_with = "b_list")]
        interactive: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub d: Option<u32>,
    /// `c,r,s`, or phi+/phi-/psi+/psi- for d = 2.
    #[arg(long)]
    pub initial: Option<String>,
    /// `ideal`, `werner:L`, `white:P` or `optics:M`; repeat to compose in order.
    #[arg(long = "noise")]
    pub noise: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file of defaults; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Facts about the process environment that commands depend on.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub stdin_is_terminal: bool,
}

/// Runs one invocation and returns the exit status.
pub fn run<I, T>(args: I, env: Env, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match commands::dispatch(cli, env, stdin, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "tkp: {e}");
            e.exit_code()
        }
    }
}
