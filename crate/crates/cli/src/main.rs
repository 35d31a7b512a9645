use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  completed, but some networks or tasks failed
  2  usage error
  3  parse error (config, topology, task, report or profile file)
  4  simulation error
  5  provider error
  6  sandbox error
  7  I/O error (missing or unwritable path)

Environment:
  SIMCODER_API_KEY  provider credential (the variable name is configurable)
  RUST_LOG          log filter, e.g. `info` or `simcoder_core=debug`";

#[derive(Debug, Parser)]
#[command(name = "simcoder", version, about = "Systolic-array accelerator simulator and code-generation agent harness")]
#[command(after_help = EXIT_CODES)]
pub struct Cli {
    /// Seed for every randomized step; also forwarded to HTTP providers.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for layer simulation or concurrent agent tasks.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one network and write its per-layer CSV report.
    #[command(after_help = EXIT_CODES)]
    Simulate(SimulateArgs),
    /// Simulate every network in a manifest and write a summary CSV.
    #[command(after_help = EXIT_CODES)]
    Bench(BenchArgs),
    /// Run the generate, evaluate and repair loop over a task corpus.
    #[command(after_help = EXIT_CODES)]
    Agent(AgentArgs),
    /// Compare a bench summary against reference cycle counts.
    #[command(after_help = EXIT_CODES)]
    Report(ReportArgs),
    /// Regenerate or check the expected outputs of task files.
    #[command(after_help = EXIT_CODES)]
    Tasks(TasksArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Architecture config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Topology CSV; the file stem names the network.
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// File listing topology CSVs, one per line, relative to the manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    /// File listing task files, one per line, relative to the manifest.
    #[arg(long)]
    pub tasks: PathBuf,
    /// zero_shot, icl, cot or icl_cot.
    #[arg(long, default_value = "icl_cot")]
    pub strategy: String,
    /// Maximum attempts per task.
    #[arg(long, default_value_t = simcoder_core::agent::DEFAULT_BUDGET)]
    pub budget: u32,
    /// Provider TOML (`kind = "http"` or `kind = "scripted"`).
    #[arg(long, conflicts_with = "replay", required_unless_present = "replay")]
    pub provider_config: Option<PathBuf>,
    /// Replay completions from an earlier run's output directory.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Sandbox profile TOML; defaults to the built-in Python 3 profile.
    #[arg(long)]
    pub sandbox_profile: Option<PathBuf>,
    /// Architecture description placed in every prompt.
    #[arg(long)]
    pub arch_spec: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary CSV written by `bench`.
    #[arg(long)]
    pub summary: PathBuf,
    /// CSV with `name,total_cycles` reference rows.
    #[arg(long)]
    pub reference: PathBuf,
    /// Where to write `comparison.csv`; nothing is written when omitted.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TasksArgs {
    /// Task manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where regenerated task files are written.
    #[arg(long, required_unless_present = "check")]
    pub output_dir: Option<PathBuf>,
    /// Only verify that stored outputs match the kernels; write nothing.
    #[arg(long)]
    pub check: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simcoder: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_codes_documented() {
        for code in 0..=7 {
            assert!(EXIT_CODES.contains(&format!("  {code}  ")), "exit code {code}");
        }
        for e in [
            CliError::Failures(String::new()),
            CliError::Usage(String::new()),
            CliError::Parse(String::new()),
            CliError::Simulation(String::new()),
            CliError::Provider(String::new()),
            CliError::Sandbox(String::new()),
            CliError::Io(String::new()),
        ] {
            assert!(EXIT_CODES.contains(&format!("  {}  ", e.exit_code())));
        }
    }
}
