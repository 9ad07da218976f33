use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod error;
mod flamegraph;
mod record;
mod roofline;
mod stat;
mod tables;

use error::CliError;

/// Performance analysis for cores with limited PMU sampling support.
#[derive(Parser, Debug)]
#[command(name = "mperf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count events over a whole run and report IPC.
    Stat(StatArgs),
    /// Sample cycles and instructions with call stacks into a trace file.
    Record(RecordArgs),
    /// Render a flame graph and hotspot table from a trace.
    Flamegraph(FlamegraphArgs),
    /// Run an instrumented program twice and build a roofline report.
    Roofline(RooflineArgs),
    /// Compute a machine model from per-cycle throughput figures.
    Roofs(RoofsArgs),
}

#[derive(Args, Debug)]
struct StatArgs {
    /// Comma-separated event names.
    #[arg(short, long, value_delimiter = ',', default_value = "cycles,instructions")]
    events: Vec<String>,
    /// Read samples from a trace instead of counting live.
    #[arg(long, value_name = "TRACE")]
    replay: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Program to run.
    #[arg(last = true)]
    command: Vec<String>,
}

#[derive(Args, Debug)]
struct RecordArgs {
    /// Sampling frequency in Hz.
    #[arg(short = 'F', long, default_value_t = mperf::sampling::DEFAULT_SAMPLE_FREQUENCY_HZ)]
    freq: u32,
    #[arg(short, long, default_value = "mperf.trace.jsonl")]
    output: PathBuf,
    /// Re-record samples from an existing trace instead of sampling live.
    #[arg(long, value_name = "TRACE")]
    replay: Option<PathBuf>,
    #[arg(last = true)]
    command: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    Cycles,
    Instructions,
}

impl Metric {
    fn event(self) -> &'static str {
        match self {
            Metric::Cycles => mperf::hotspots::CYCLES,
            Metric::Instructions => mperf::hotspots::INSTRUCTIONS,
        }
    }
}

#[derive(Args, Debug)]
struct FlamegraphArgs {
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Cycles)]
    metric: Metric,
    /// SVG output. Defaults to flamegraph.svg unless only --folded is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write collapsed stacks here.
    #[arg(long)]
    folded: Option<PathBuf>,
    /// Symbol map with `<start> <end> <name>` lines (hex addresses).
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Rows in the hotspot table.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Print the hotspot table as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RooflineArgs {
    /// Machine model JSON.
    #[arg(long)]
    machine: Option<PathBuf>,
    /// Directory for phase reports, roofline.json and roofline.svg.
    #[arg(long, default_value = "mperf-roofline")]
    out: PathBuf,
    #[arg(long)]
    json: bool,
    /// Instrumented program and its arguments.
    #[arg(last = true, required = true)]
    command: Vec<String>,
}

#[derive(Args, Debug)]
struct RoofsArgs {
    /// Sustained instructions per cycle.
    #[arg(long, allow_negative_numbers = true)]
    ipc: f64,
    /// FLOPs per instruction (vector lanes times 2 for FMA, and so on).
    #[arg(long, allow_negative_numbers = true)]
    flops_per_insn: f64,
    #[arg(long, allow_negative_numbers = true)]
    freq_ghz: f64,
    /// Sustained memory bytes per cycle.
    #[arg(long, allow_negative_numbers = true)]
    bytes_per_cycle: f64,
    #[arg(long, default_value = "custom")]
    name: String,
    /// Write the model here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stat(a) => stat::run(a),
        Command::Record(a) => record::run(a),
        Command::Flamegraph(a) => flamegraph::run(a),
        Command::Roofline(a) => roofline::run(a),
        Command::Roofs(a) => roofline::roofs(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(error::USAGE),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mperf: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Profile of the machine we run on, honouring the database and
/// force-platform overrides.
fn host_profile() -> Result<mperf::PlatformProfile, CliError> {
    Ok(mperf::PlatformDb::from_env()?.host_profile()?)
}
