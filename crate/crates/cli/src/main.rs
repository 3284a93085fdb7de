mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regrepair_core::model::SnapshotRole;
use regrepair_core::prompt::{PromptMode, Strategy};

#[derive(Parser, Debug)]
#[command(name = "regrepair", version, about = "Regression bug benchmark and LLM repair toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct StoreArg {
    /// Bug store directory.
    #[arg(long, env = "REGREPAIR_STORE", default_value = ".")]
    store: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a bug's manifest.
    Info {
        bug_id: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Describe the tool environment and the store.
    Env {
        #[command(flatten)]
        store: StoreArg,
    },
    /// Materialize one snapshot of a bug.
    Checkout {
        bug_id: String,
        #[arg(value_enum)]
        role: RoleArg,
        dest: PathBuf,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Compile a checked-out workspace.
    Compile { workspace: PathBuf },
    /// Run tests in a checked-out workspace.
    Test {
        workspace: PathBuf,
        /// Comma-separated test ids; the whole suite when omitted.
        #[arg(long, value_delimiter = ',')]
        tests: Vec<String>,
        /// Per-test timeout in seconds.
        #[arg(long, default_value_t = 300.0)]
        timeout: f64,
    },
    /// Run the confirmation funnel over every bug in the store.
    Validate {
        #[command(flatten)]
        store: StoreArg,
        /// Earliest accepted fixing-commit date (YYYY-MM-DD).
        #[arg(long, default_value = "2017-06-01")]
        cutoff: String,
        #[arg(long, default_value = "funnel-report.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        timeout: f64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Compute inducing and fixing change sets, minimized by witness coverage.
    ExtractChanges {
        bug_id: String,
        #[command(flatten)]
        store: StoreArg,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run LLM repair over the store.
    Repair(RepairArgs),
    /// Patch statistics and operator distribution of developer fixes.
    Stats {
        #[command(flatten)]
        store: StoreArg,
        /// Operator annotations (JSON list).
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Restrict to bugs confirmed in this funnel report.
        #[arg(long)]
        funnel_report: Option<PathBuf>,
        #[arg(long, default_value = "stats")]
        out: PathBuf,
    },
    /// Tabulate plausible/correct rates and precision.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct RepairArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Store directory; overrides the config.
    #[arg(long, env = "REGREPAIR_STORE")]
    store: Option<PathBuf>,
    /// Replay scripted replies from this JSON file instead of calling a model.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Only these bugs (comma-separated).
    #[arg(long, value_delimiter = ',')]
    bugs: Vec<String>,
    /// Correctness annotations used for the summary.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Repair output directories, optionally as LABEL=DIR. A run's
    /// correctness judgements are read from its annotations.json.
    runs: Vec<String>,
    /// Literal counts as LABEL=PLAUSIBLE/CORRECT.
    #[arg(long = "counts")]
    counts: Vec<String>,
    /// Dataset size; defaults to the number of traces in each run.
    #[arg(long)]
    dataset_size: Option<u64>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
    /// Also write summary.csv and summary.json here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RoleArg {
    PreInducing,
    Inducing,
    PreFixing,
    Fixing,
}

impl From<RoleArg> for SnapshotRole {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::PreInducing => SnapshotRole::PreInducing,
            RoleArg::Inducing => SnapshotRole::Inducing,
            RoleArg::PreFixing => SnapshotRole::PreFixing,
            RoleArg::Fixing => SnapshotRole::Fixing,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StrategyArg {
    ZeroShot,
    Conversational,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::ZeroShot => Strategy::ZeroShot,
            StrategyArg::Conversational => Strategy::Conversational,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Baseline,
    WithBic,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => PromptMode::Baseline,
            ModeArg::WithBic => PromptMode::WithBic,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Csv,
    Markdown,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
