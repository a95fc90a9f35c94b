//! Command-line front end of the fingertip actuator twin. The binary is a
//! thin wrapper around [`entry`]; the file formats live here so tests and
//! other tools can read the outputs back.

pub mod commands;
pub mod config;
pub mod params;
pub mod plot;
pub mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stem_twin::electromech::Mode;

use crate::commands::Waveform;
use crate::config::{usage, CliError, KvFile};

#[derive(Parser, Debug)]
#[command(
    name = "stem-twin",
    version,
    about = "Digital twin of a soft electromagnetic fingertip actuator",
    after_help = "Settings resolve as: flag > --config file > built-in default.\n\
                  STEM_TWIN_THREADS caps the worker pool.\n\
                  Exit codes: 0 success, 1 domain error, 2 usage error."
)]
pub struct Cli {
    /// Flat `key = value` file using the subcommand's long flag names as keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Magnetic field of the reference coil on an (r, z) grid.
    Field(FieldArgs),
    /// Grid sweep of the design objective over magnet height and coil width.
    Sweep(SweepArgs),
    /// Grid sweep followed by simplex refinement of the best cell.
    Optimize(OptimizeArgs),
    /// Fit the lumped model to the bench targets and write a parameter file.
    Calibrate(CalibrateArgs),
    /// Time-domain simulation; step metrics for blocked steps.
    Simulate(SimulateArgs),
    /// Steady-state frequency sweep by time-domain simulation.
    Freq(FreqArgs),
    /// Coil heating under a sinusoidal drive, then cooling.
    Thermal(ThermalArgs),
    /// Pose log -> haptic renderer -> simulated device.
    Replay(ReplayArgs),
    /// Feed a drive stream through the simulated device, write telemetry.
    ProtocolEcho(EchoArgs),
}

#[derive(Args, Debug)]
pub struct FieldArgs {
    /// Coil current (A).
    #[arg(long)]
    current: Option<f64>,
    /// Largest radius of the grid (m).
    #[arg(long)]
    r_max: Option<f64>,
    /// Axial extent, symmetric about the coil centre (m).
    #[arg(long)]
    z_half: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also draw the on-axis field as SVG.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Magnet height range (mm).
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    /// Coil width range (mm).
    #[arg(long)]
    w_min: Option<f64>,
    #[arg(long)]
    w_max: Option<f64>,
    #[arg(long)]
    h_steps: Option<usize>,
    #[arg(long)]
    w_steps: Option<usize>,
    /// Drive voltage used to evaluate power (V).
    #[arg(long)]
    volts: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Objective versus coil width, one line per magnet height.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Replace the step-timing target by the ~10 Hz blocked-force band.
    #[arg(long)]
    no_t90: bool,
    /// Declared moving mass (kg).
    #[arg(long)]
    moving_mass: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Parameter file from `calibrate`; calibrates on the fly if omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// blocked | free
    #[arg(long)]
    mode: Option<Mode>,
    /// step | sine | ramp | impulse | zero
    #[arg(long)]
    waveform: Option<Waveform>,
    #[arg(long, allow_negative_numbers = true)]
    volts: Option<f64>,
    /// Sine frequency (Hz).
    #[arg(long)]
    freq: Option<f64>,
    /// Ramp rise or impulse width (s).
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    /// Integration step (s); defaults to a safe fraction of the mechanical period.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Keep every n-th step in the trace.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FreqArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Comma-separated drive amplitudes (V).
    #[arg(long)]
    amps: Option<String>,
    #[arg(long)]
    f_min: Option<f64>,
    #[arg(long)]
    f_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ThermalArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    /// Sine amplitude (V).
    #[arg(long)]
    volts: Option<f64>,
    #[arg(long)]
    freq: Option<f64>,
    /// Heating time (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Cooling time after the drive stops (s).
    #[arg(long)]
    cooldown: Option<f64>,
    /// Output sampling interval (s).
    #[arg(long)]
    every: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    /// Scene description.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Pose log, `t_ms,finger,x,y,z` per line.
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    finger: Option<String>,
    /// Override the stiffness of every object (N/m).
    #[arg(long)]
    stiffness: Option<f64>,
    #[arg(long)]
    tick_rate: Option<f64>,
    /// Per-tick render commands.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Device readings at telemetry instants.
    #[arg(long)]
    device_out: Option<PathBuf>,
    /// Encoded telemetry byte stream.
    #[arg(long)]
    telemetry: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EchoArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    /// Drive input: encoded frames (`bin`) or one voltage per line (`csv`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// bin | csv
    #[arg(long)]
    format: Option<String>,
    /// Probability of corrupting each drive frame before decoding.
    #[arg(long)]
    corrupt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Telemetry output (encoded frames).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the (possibly corrupted) drive stream as sent.
    #[arg(long)]
    drive_out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STEM_TWIN_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return usage(format!("STEM_TWIN_THREADS must be a positive integer, got `{v}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Domain(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = match &cli.config {
        Some(p) => KvFile::load(p)?,
        None => KvFile::default(),
    };
    match cli.command {
        Command::Field(a) => commands::field(a, &cfg),
        Command::Sweep(a) => commands::sweep(a, &cfg),
        Command::Optimize(a) => commands::optimize(a, &cfg),
        Command::Calibrate(a) => commands::calibrate(a, &cfg),
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::Freq(a) => commands::freq(a, &cfg),
        Command::Thermal(a) => commands::thermal(a, &cfg),
        Command::Replay(a) => commands::replay(a, &cfg),
        Command::ProtocolEcho(a) => commands::protocol_echo(a, &cfg),
    }
}

/// Parse `std::env::args` and run. clap itself exits 0 for `--help` and
/// 2 for malformed flags.
pub fn entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
