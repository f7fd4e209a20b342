use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use hardycap::run::{run_path, Options, Subcommand};
use hardycap::scenario::Mode;

#[derive(Parser)]
#[command(
    version,
    about = "Weighted capacity and Hardy-Sobolev experiments on grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Run one pipeline (or `all`) on a scenario file.
    Run {
        #[arg(value_enum)]
        pipeline: Subcommand,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel scans.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the scenario integrand mode.
        #[arg(long)]
        mode: Option<Mode>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        pipeline,
        scenario,
        out,
        seed,
        threads,
        mode,
    } = cli.command;
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = Options {
        out,
        seed,
        threads,
        mode,
    };
    match run_path(&scenario, pipeline, &opts) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(v) = &report.verdict {
                println!("verdict: {v}");
            }
            println!("wrote {}", opts.out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
