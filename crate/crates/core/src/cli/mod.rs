//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid input or an unusable output
//! directory, 3 when a numerical stage fails to converge. Partial outputs
//! are written before a 3 is returned.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

pub use config::{resolve, RunConfig, OUTPUT_ENV};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ma-lab", version, about = "Stability exponents and discrete complex Monge-Ampere experiments")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// JSON object applied over the config file.
    #[arg(long = "set-json", global = true)]
    pub set_json: Option<String>,
    /// Output root; defaults to $MA_LAB_OUT, then ./ma-lab-out.
    #[arg(long = "out", global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponent recurrence, its limit and the kappa table.
    Exponents(ExponentArgs),
    /// Distances between a singular radial profile and its translates.
    Sharpness(SharpnessArgs),
    /// One Monge-Ampere solve on the torus grid.
    Solve(GridArgs),
    /// Stability sweep over a perturbation family.
    Stability(GridArgs),
    /// Comparison, sublevel-capacity and mixed-determinant checks.
    Properties(GridArgs),
    /// Capacities of nested balls and the domination fit.
    Capacity(GridArgs),
    /// Sup distance against the L^s distance.
    Egz(GridArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExponentArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    chi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delta0: Option<f64>,
    #[arg(long = "k-max")]
    #[serde(skip_serializing_if = "Option::is_none")]
    k_max: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SharpnessArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[arg(long = "B")]
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[arg(long = "D")]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[arg(long = "smoothing-width")]
    #[serde(skip_serializing_if = "Option::is_none")]
    smoothing_width: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long = "grid-size", short = 'N')]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_size: Option<usize>,
    /// `flat` or `cosine`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    background: Option<String>,
    #[arg(long = "cosine-c")]
    #[serde(skip_serializing_if = "Option::is_none")]
    cosine_c: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    radii: Option<Vec<f64>>,
    /// `trig`, `peak` or `indicator`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitudes: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long = "tol-psd")]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_psd: Option<f64>,
    #[arg(long = "max-sweeps")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_sweeps: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Exponents(_) => "exponents",
            Command::Sharpness(_) => "sharpness",
            Command::Solve(_) => "solve",
            Command::Stability(_) => "stability",
            Command::Properties(_) => "properties",
            Command::Capacity(_) => "capacity",
            Command::Egz(_) => "egz",
        }
    }

    fn flags(&self) -> Map<String, Value> {
        let v = match self {
            Command::Exponents(a) => serde_json::to_value(a),
            Command::Sharpness(a) => serde_json::to_value(a),
            Command::Solve(a) | Command::Stability(a) | Command::Properties(a) | Command::Capacity(a) | Command::Egz(a) => serde_json::to_value(a),
        };
        match v {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotConverged { .. } | Error::Quadrature { .. } | Error::InsufficientRecords { .. } | Error::DegenerateFit(_) | Error::Bracket { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_INVALID,
    }
}

/// Resolves the config for a parsed command line.
pub fn config_from(cli: &Cli) -> crate::Result<RunConfig> {
    let mut flags = cli.command.flags();
    if let Some(out) = &cli.out {
        flags.insert("output_dir".into(), Value::String(out.to_string_lossy().into_owned()));
    }
    if let Some(seed) = cli.seed {
        flags.insert("seed".into(), Value::from(seed));
    }
    let cfg = resolve(cli.command.name(), cli.config.as_deref(), cli.set_json.as_deref(), flags)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = config_from(&cli).and_then(|cfg| {
        output::prepare_dir(&cfg.command_dir())?;
        commands::execute(&cfg)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.message);
            if outcome.converged {
                EXIT_OK
            } else {
                eprintln!("error: numerical stage did not converge; partial outputs kept");
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
