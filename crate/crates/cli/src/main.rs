//! `adalb`: batch front end for rates, constructions, certificates and simulations.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 usage or invalid
//! parameters, 3 numerical or I/O failure.

mod commands;
mod config;
mod emit;

use clap::Parser;
use std::process::ExitCode;

use config::{parse_config, Command, Flags};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl From<adalb::error::Error> for CliError {
    fn from(e: adalb::error::Error) -> Self {
        use adalb::error::Error as E;
        match e {
            E::Domain(_) | E::Regime(_) | E::Infeasible(_) => CliError::Usage(e.to_string()),
            E::Numerical(_) | E::Unsupported(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adalb", version, about = "Lower-bound certificates for adaptive estimation of the L2 norm of a density")]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = parse_config(cli.command, &cli.flags)?;
    let out = commands::run(&cfg)?;
    let paths = emit::emit(&cfg, &out)?;
    println!("{}", serde_json::to_string_pretty(&out.report).expect("report serializes"));
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
    if !out.pass {
        eprintln!("check failed: see the report status");
    }
    Ok(out.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("adalb: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
