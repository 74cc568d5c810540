use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtle_net::experiment::{run_experiment, Experiment};
use dtle_net::fixtures::FIXTURES;
use dtle_net::oracle::solve_centralized;

/// Distributed solver for A X A' - X + Q = 0 over time-varying networks.
#[derive(Parser)]
#[command(name = "dtle-net", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trajectory.csv, summary.txt and solution_X.txt.
    Run {
        config: PathBuf,
        /// Output directory; overrides [output] dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled problem instances.
    Fixtures,
    /// Solve the configured instance centrally and print X.
    Oracle { config: PathBuf },
}

const EXIT_CONFIG: u8 = 1;

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("DTLE_NET_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("DTLE_NET_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load(config: &Path) -> Result<Experiment, ExitCode> {
    Experiment::load(config).map_err(|e| {
        eprintln!("{}: {e}", config.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(config: &Path, out: Option<&Path>) -> ExitCode {
    let exp = match load(config) {
        Ok(exp) => exp,
        Err(code) => return code,
    };
    match run_experiment(&exp, out) {
        Ok(res) => {
            let s = &res.summary;
            eprintln!(
                "{} after {} rounds; residual_max {:e}; outputs in {}",
                s.outcome.name(),
                s.rounds,
                s.last.residual_max,
                res.out_dir.display()
            );
            ExitCode::from(s.outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn oracle(config: &Path) -> ExitCode {
    let exp = match load(config) {
        Ok(exp) => exp,
        Err(code) => return code,
    };
    let solved = exp.problem().and_then(|p| solve_centralized(&p));
    match solved {
        Ok(sol) => {
            print!("{}", sol.x_star.to_text());
            eprintln!("residual {:e}", sol.residual);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", config.display());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match cli.command {
        Command::Run { config, out } => run(&config, out.as_deref()),
        Command::Fixtures => {
            for (name, about) in FIXTURES {
                println!("{name:<12} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Oracle { config } => oracle(&config),
    }
}
