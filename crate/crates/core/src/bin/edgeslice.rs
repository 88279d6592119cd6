use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgeslice::control::SchemeKind;
use edgeslice::runner::{compare_schemes, format_report, read_bandit_dumps, run_scenario};
use edgeslice::scenario::load_config;

#[derive(Parser)]
#[command(name = "edgeslice", version, about = "Per-hop resource control for a simulated 5G edge pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme on a scenario.
    Run {
        config: PathBuf,
        #[arg(long)]
        scheme: SchemeKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scheme listed in the scenario on the same traffic.
    Compare {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the learned bandit tables of a run or comparison directory.
    DumpBandit { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("edgeslice: {err}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            config,
            scheme,
            out,
        } => {
            let cfg = load_config(&config)?;
            let artifacts = run_scenario(&cfg, scheme, &out)?;
            println!("{}", std::fs::read_to_string(&artifacts.summary)?.trim_end());
            println!("wrote {}", out.display());
        }
        Command::Compare { config, out } => {
            let cfg = load_config(&config)?;
            let cmp = compare_schemes(&cfg, &out)?;
            print!("{}", format_report(&cfg.name, &cmp.rows));
            println!("wrote {}", out.display());
        }
        Command::DumpBandit { dir } => {
            let tables = read_bandit_dumps(&dir)?;
            if tables.is_empty() {
                println!("no bandit tables (static or tcp scheme)");
            }
            for table in tables {
                println!("{table}");
            }
        }
    }
    Ok(())
}
