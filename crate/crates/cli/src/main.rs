use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use factum_cli::{run, Command, RunOptions};

#[derive(Parser, Debug)]
#[command(
    name = "factum",
    version,
    about = "Run one pipeline on a scenario file"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
    };
    match run(cli.command, &cli.scenario, &opts) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}  {}", o.sha256, o.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
