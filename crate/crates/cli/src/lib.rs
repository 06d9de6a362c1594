//! Command-line front end: fit a policy to a demonstration file, adapt it to
//! new descriptors, and export rollouts, fields, metrics and timings.
//!
//! Exit status: 0 success, 1 usage error, 2 invalid input, 3 numerical
//! failure.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod files;
pub mod settings;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "elastic-ds", version, about = "Stable motion policies re-targeted to new entry and exit poses")]
pub struct Cli {
    /// Seed for mixture fitting.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON settings file.
    #[arg(long, global = true, env = "ELASTIC_DS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Suppress report lines.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a chain and policy to a demonstration file.
    Fit(FitArgs),
    /// Adapt a policy to a descriptor file.
    Transform(TransformArgs),
    /// Integrate a policy and write the path as CSV.
    Rollout(RolloutArgs),
    /// Sample a policy on a grid; write CSV and/or SVG.
    Field(FieldArgs),
    /// Start/goal direction cosines and endpoint distance as JSON.
    Metrics(MetricsArgs),
    /// Time adaptation over a range of demonstration lengths.
    Bench(BenchArgs),
    /// Join policies whose chains meet end to start into one policy.
    Stitch(StitchArgs),
    /// Cut a demonstration at via-points into segment files.
    Split(SplitArgs),
    /// Write a scripted demonstration (and optionally a descriptor).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub demo: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Which trajectory of the demo file to fit.
    #[arg(long, default_value_t = 0)]
    pub trajectory: usize,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub policy: PathBuf,
    pub descriptor: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolloutOptions {
    /// Start point as comma-separated coordinates; defaults to the entry pose.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub start: Option<::std::vec::Vec<f64>>,
    /// Integration step in seconds; defaults to 1% of the policy time scale.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Convergence radius; defaults to 0.1% of the workspace diameter.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Rk4)]
    pub integrator: IntegratorArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    pub policy: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub rollout: RolloutOptions,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    pub policy: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    pub nx: usize,
    #[arg(long, default_value_t = 25)]
    pub ny: usize,
    /// Lower grid corner; defaults to the padded workspace box.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub lo: Option<::std::vec::Vec<f64>>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub hi: Option<::std::vec::Vec<f64>>,
    /// Leave the rollout out of the SVG.
    #[arg(long)]
    pub no_rollout: bool,
    #[command(flatten)]
    pub rollout: RolloutOptions,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub policy: PathBuf,
    /// Descriptor to score against; defaults to the one the policy was
    /// adapted to, then to the chain's own end frames.
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub rollout: RolloutOptions,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "s-curve")]
    pub shape: String,
    /// Demonstration lengths.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800,900,1000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Entry shift `dx,dy[,dz],angle` relative to the demo's start frame.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "-0.1,0.1,0.2")]
    pub enter_shift: ::std::vec::Vec<f64>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0.15,0.1,-0.25")]
    pub exit_shift: ::std::vec::Vec<f64>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StitchArgs {
    #[arg(required = true, num_args = 2..)]
    pub policies: Vec<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub demo: PathBuf,
    /// Via-point as comma-separated coordinates; repeat for more. Defaults
    /// to the via-points stored in the demo file.
    #[arg(long = "via", value_parser = parse_point, allow_hyphen_values = true)]
    pub via: Vec<Vec<f64>>,
    /// Largest allowed distance from a via-point to the demonstration;
    /// defaults to 1% of its bounding diameter.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub trajectory: usize,
    /// Segment `i` is written to `<prefix>-<i>.json`.
    #[arg(long)]
    pub prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "s-curve")]
    pub shape: String,
    #[arg(short = 'n', long, default_value_t = 200)]
    pub samples: usize,
    /// Duration in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write a both-ends-shifted descriptor here.
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "-0.1,0.1,0.2")]
    pub enter_shift: ::std::vec::Vec<f64>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, default_value = "0.15,0.1,-0.25")]
    pub exit_shift: ::std::vec::Vec<f64>,
}

/// Parses comma-separated finite numbers.
pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let v: f64 = t.trim().parse().map_err(|_| format!("`{t}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{t}` is not finite"))
            }
        })
        .collect()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(status);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
