mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Trace-driven multicore LLC simulator with energy-saving reconfiguration
/// policies.
#[derive(Debug, Parser)]
#[command(name = "cachesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trace from a workload spec.
    GenTrace {
        /// Workload spec (TOML, or JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one policy on a trace.
    Run {
        /// Scenario config (TOML, or JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        /// Overrides the policy named in the config.
        #[arg(long)]
        policy: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Leave the first N intervals out of the totals.
        #[arg(long)]
        skip_intervals: Option<usize>,
    },
    /// Compare a technique report against a baseline report.
    Compare {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        tech: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the baseline and several policies on one trace.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        /// Directory for per-policy reports and the combined summary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the closed-form overheads and constants of a preset.
    Formulas {
        #[arg(long, default_value = "cacti32nm-4mb")]
        preset: String,
        /// Core count; defaults to the preset's.
        #[arg(long)]
        cores: Option<u32>,
        #[arg(long, default_value_t = 64)]
        sample_ratio: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTrace { spec, seed, out } => commands::gen_trace(&spec, seed, &out),
        Command::Run {
            config,
            trace,
            policy,
            out,
            format,
            skip_intervals,
        } => commands::run(commands::RunArgs {
            config: config.as_deref(),
            trace: &trace,
            policy: policy.as_deref(),
            out: out.as_deref(),
            format,
            skip_intervals,
        }),
        Command::Compare {
            base,
            tech,
            out,
            format,
        } => commands::compare(&base, &tech, out.as_deref(), format),
        Command::Sweep {
            config,
            trace,
            policies,
            out,
        } => commands::sweep(config.as_deref(), &trace, &policies, &out),
        Command::Formulas {
            preset,
            cores,
            sample_ratio,
        } => commands::formulas(&preset, cores, sample_ratio),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cachesim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
