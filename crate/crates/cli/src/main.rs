use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linetube_cli::{cmd_simulate, cmd_synthesize, cmd_validate, CliError, SimulateOptions};

#[derive(Parser)]
#[command(name = "linetube", version, about = "Tube MPC for overhead-line temperature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every problem found.
    Validate { scenario: PathBuf },
    /// Compute the feedback gain, tube and tightened sets.
    Synthesize {
        scenario: PathBuf,
        #[arg(short, long, default_value = "controller.toml")]
        out: PathBuf,
    },
    /// Run the closed loop (or the free plant) and write traces.
    Simulate {
        scenario: PathBuf,
        /// Controller artifact from `synthesize`; synthesized on the fly if omitted.
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run this many consecutive seeds starting at --seed.
        #[arg(long)]
        seed_sweep: Option<usize>,
        /// Hold every control at zero.
        #[arg(long)]
        free: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Synthesize { scenario, out } => cmd_synthesize(&scenario, &out),
        Command::Simulate { scenario, controller, steps, seed, seed_sweep, free, csv, report, svg } => {
            let opts = SimulateOptions { controller, steps, seed, seed_sweep, free, csv, report, svg };
            cmd_simulate(&scenario, &opts).map(|o| o.report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
