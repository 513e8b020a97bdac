//! `mpo`: decompose, truncate, squeeze and benchmark matrix product
//! operators from the command line.
//!
//! Exit codes: 0 success, 1 I/O or unreadable input, 2 invalid arguments
//! or configuration, 3 a checked property failed.

mod commands;
mod failure;
mod matrix_file;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mpo", version, about = "Matrix product operator factorization and compression")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "MPO_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factorize a matrix at full bonds and write a bundle.
    Decompose(commands::decompose::Args),
    /// Reduce the bonds of a bundle and report the error bound.
    Truncate(commands::truncate::Args),
    /// Run dimension squeezing on a synthetic teacher task.
    Squeeze(commands::squeeze::Args),
    /// Time the forward contraction of a named plan over bond caps.
    Bench(commands::bench::Args),
    /// Check exact reconstruction and the truncation bound on a matrix.
    Roundtrip(commands::roundtrip::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(a) => commands::decompose::run(a),
        Command::Truncate(a) => commands::truncate::run(a),
        Command::Squeeze(a) => commands::squeeze::run(a, cli.seed),
        Command::Bench(a) => commands::bench::run(a, cli.seed),
        Command::Roundtrip(a) => commands::roundtrip::run(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
