//! Library side of the `weylctl` binary: configuration, artifacts and commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod pulse;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "weylctl", version, about = "Two-qubit gate optimization towards local equivalence classes")]
pub struct Cli {
    /// Worker threads for parallel propagation.
    #[arg(long, global = true, env = "WEYLCTL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print invariants, Weyl coordinates and nearest named class of a gate file.
    Invariants { gate_file: PathBuf },
    /// Print the table of named classes.
    Table,
    /// Run a Krotov optimization.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Propagate a stored pulse and write the logical-subspace dynamics.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pulse: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs a parsed command line, printing to stdout, and returns the exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config {
                path: "--threads".into(),
                message: "must be at least 1".into(),
            });
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Invariants { gate_file } => {
            println!("{}", commands::invariants(&gate_file)?);
            Ok(0)
        }
        Command::Table => {
            print!("{}", commands::table());
            Ok(0)
        }
        Command::Optimize {
            config,
            out,
            seed,
            max_iters,
        } => {
            let over = commands::Overrides { out, seed, max_iters };
            let s = commands::optimize(&config, &over)?;
            println!("{}", s.message);
            println!("artifacts in {}", s.output_dir.display());
            Ok(s.exit_code)
        }
        Command::Replay { config, pulse, out } => {
            let over = commands::Overrides {
                out,
                ..Default::default()
            };
            println!("{}", commands::replay(&config, &pulse, &over)?);
            Ok(0)
        }
    }
}
