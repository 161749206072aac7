//! `doafuse`: simulate rooms, fit calibrations, map captures to locations,
//! evaluate estimates and run the fusion center.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 data error. Diagnostics
//! go to stderr prefixed `error[config]:`, `error[data]:` or `warning:`.

mod commands;
mod config;
mod error;
mod estimates;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::commands::DoaArgs;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "doafuse", version, about = "Sound-source localization from distributed DOA arrays")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a trajectory: ground-truth CSV, wire capture and optional calibration CSV.
    Simulate(RunArgs),
    /// Fit affine and PCA models on a calibration CSV and report the fit.
    Calibrate(RunArgs),
    /// Join a capture into time bins and map each bin with the chosen method.
    Map(RunArgs),
    /// Compare mapped estimates with ground truth.
    Evaluate(RunArgs),
    /// Accept wire records over TCP and store them per array.
    Serve(ServeArgs),
    /// Send a capture file to a running server.
    Replay(ReplayArgs),
    /// Join stored records into the chronological DOA table.
    Query(QueryArgs),
    /// Estimate DOAs from a multichannel WAV recording of one array.
    Doa(DoaCmd),
    /// Write the half-sphere search grid as CSV.
    ExportGrid(GridArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file whose settings replace the matching flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(p) => Ok(self.run.overridden_by(RunConfig::load(p)?)),
            None => Ok(self.run),
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    /// Directory for the per-array logs; reopened stores are replayed.
    #[arg(long)]
    storage: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Stop after this many seconds instead of at end of stdin.
    #[arg(long)]
    duration_s: Option<f64>,
    /// After shutdown, write the joined table here.
    #[arg(long)]
    export: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    arrays: usize,
    #[arg(long, default_value_t = 64)]
    bin_ms: i64,
    #[arg(long, default_value_t = 4096)]
    channel_capacity: usize,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    capture: PathBuf,
    #[arg(long)]
    connect: String,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    storage: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    arrays: usize,
    #[arg(long, default_value_t = 64)]
    bin_ms: i64,
    /// Inclusive start, corrected milliseconds.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<i64>,
    /// Exclusive end, corrected milliseconds.
    #[arg(long, allow_hyphen_values = true)]
    to: Option<i64>,
}

#[derive(Args)]
struct DoaCmd {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    array_id: u16,
    /// Microphones on a horizontal circle, channel k at angle 2*pi*k/mics.
    #[arg(long, default_value_t = 8)]
    mics: usize,
    /// Circle radius in meters.
    #[arg(long, default_value_t = 0.05)]
    radius: f64,
    #[arg(long, default_value_t = 343.0)]
    speed_of_sound: f64,
    #[arg(long, default_value_t = 4)]
    grid_level: u32,
    /// Timestamp of the first sample.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    start_ms: i64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 4)]
    level: u32,
    #[arg(long)]
    out: PathBuf,
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => commands::simulate(&a.resolve()?),
        Command::Calibrate(a) => commands::calibrate(&a.resolve()?),
        Command::Map(a) => commands::map(&a.resolve()?),
        Command::Evaluate(a) => commands::evaluate(&a.resolve()?),
        Command::Serve(a) => {
            let duration = match a.duration_s {
                Some(s) if s.is_finite() && s >= 0.0 => Some(Duration::from_secs_f64(s)),
                Some(s) => return Err(CliError::Config(format!("bad duration {s}"))),
                None => None,
            };
            let export = a.export.as_deref().map(|p| (p, a.arrays, a.bin_ms));
            commands::serve(&a.storage, &a.listen, duration, export, a.channel_capacity)
        }
        Command::Replay(a) => commands::replay(&a.capture, &a.connect),
        Command::Query(a) => commands::query_store(
            &a.storage,
            &a.out,
            a.arrays,
            a.bin_ms,
            (a.from.unwrap_or(i64::MIN), a.to.unwrap_or(i64::MAX)),
        ),
        Command::Doa(a) => commands::doa(DoaArgs {
            wav: &a.wav,
            out: &a.out,
            array_id: a.array_id,
            mics: a.mics,
            radius: a.radius,
            speed_of_sound: a.speed_of_sound,
            grid_level: a.grid_level,
            start_ms: a.start_ms,
        }),
        Command::ExportGrid(a) => commands::export_grid(a.level, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
