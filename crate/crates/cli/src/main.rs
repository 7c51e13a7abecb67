//! `massgame`: batch front end for simulations, classification, condition
//! checks and the counterexamples.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use config::{ClassifyArgs, ConfigError, S1Args, SimulateArgs, VerifyArgs, W2Args};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "massgame", version, about = "Weighted sums regulated by mass sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file (or a previous report.json); flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving report.json and data.csv
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it [env: MASSGAME_THREADS]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 3 when the run's verdict is not the expected one
    #[arg(long, global = true)]
    assert: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    Simulate(SimulateArgs),
    Classify(ClassifyArgs),
    VerifyConditions(VerifyArgs),
    Counterexample {
        #[command(subcommand)]
        which: Counterexample,
    },
    /// Built-in mass sequences with their chart cells
    ListExamples,
}

#[derive(Debug, Subcommand)]
enum Counterexample {
    W2(W2Args),
    S1(S1Args),
}

/// Why a run ended unsuccessfully.
pub enum Failure {
    Config(String),
    Runtime(String),
    Assert(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<massgame::Error> for Failure {
    fn from(e: massgame::Error) -> Self {
        use massgame::Error::*;
        match e {
            InvalidSpec(_) | InvalidFamily(_) | InvalidGrid(_) | InvalidConfig(_) | BudgetTooSmall(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("MASSGAME_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| Failure::Config(format!("MASSGAME_THREADS='{v}' is not a count")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::Config("thread count must be positive".into()));
    }
    Ok(n)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file = |name: &str| cli.config.as_deref().map(|p| config::read_file(p, name)).transpose();
    let out = || cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let outcome = match &cli.command {
        Command::Simulate(args) => {
            let resolved = config::layer(args, file("simulate")?)?.resolve()?;
            commands::simulate(&resolved)?
        }
        Command::Classify(args) => {
            let resolved = config::layer(args, file("classify")?)?.resolve()?;
            commands::classify(&resolved)?
        }
        Command::VerifyConditions(args) => {
            let resolved = config::layer(args, file("verify-conditions")?)?.resolve()?;
            commands::verify(&resolved)?
        }
        Command::Counterexample { which: Counterexample::W2(args) } => {
            let resolved = config::layer(args, file("counterexample-w2")?)?.resolve()?;
            commands::w2(&resolved)?
        }
        Command::Counterexample { which: Counterexample::S1(args) } => {
            let resolved = config::layer(args, file("counterexample-s1")?)?.resolve()?;
            commands::s1(&resolved)?
        }
        Command::ListExamples => {
            let outcome = commands::list_examples()?;
            print!("{}", outcome.summary);
            if let Some(dir) = &cli.out {
                outcome.write(dir)?;
            }
            return Ok(());
        }
    };
    let dir = out();
    outcome.write(&dir)?;
    print!("{}", outcome.summary);
    println!("wrote {} and {}", dir.join("report.json").display(), dir.join("data.csv").display());
    match (&outcome.failed, cli.assert) {
        (Some(why), true) => Err(Failure::Assert(why.clone())),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads(cli.threads).and_then(|n| match n {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Runtime(format!("cannot start {n} worker threads: {e}")))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Assert(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
