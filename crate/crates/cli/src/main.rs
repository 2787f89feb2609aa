//! `evbc`: synthesize, align, build, evaluate and inspect event-camera
//! imitation-learning datasets.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::exit::CliError;

#[derive(Parser, Debug)]
#[command(name = "evbc", version, about)]
#[command(
    after_help = "Exit codes: 0 ok, 1 failure, 2 config/usage, 3 I/O, 4 clock sync, \
5 missing predictions, 6 checksum mismatch, 10 ingest, 11 clock model, 12 windowing, \
13 rasterize, 14 geometry, 15 actions, 16 container."
)]
struct Cli {
    /// Print a machine-readable JSON result on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for batch work (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides the seed of the command (scene seed, split seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic episode directory.
    Synth(SynthArgs),
    /// Fit the event-to-RGB clock model of an episode.
    Align(AlignArgs),
    /// Build a dataset container from an aligned episode.
    Build(BuildArgs),
    /// Score predictions against container labels.
    Eval(EvalArgs),
    /// Summarize and verify a container.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene config (JSON). Defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output episode directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Episode directory containing events.envt and frames.csv.
    #[arg(long)]
    pub episode: PathBuf,
    /// Minimum matched pulses on each clock.
    #[arg(long, default_value_t = 10)]
    pub min_pulses: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSource {
    Odometry,
    Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Pipeline config (JSON). Flags below are ignored when given.
    #[arg(long, conflicts_with_all = ["episode", "root"])]
    pub config: Option<PathBuf>,
    /// Single aligned episode directory.
    #[arg(long, conflicts_with = "root")]
    pub episode: Option<PathBuf>,
    /// Root whose subdirectories are episodes; builds each into `<out>/<name>`.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Output container directory (or root of containers in batch mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Histogram downsampling factor.
    #[arg(long, default_value_t = 4)]
    pub downsample: usize,
    /// Include registered RGB frames.
    #[arg(long)]
    pub rgb: bool,
    /// Homography file (defaults to `<episode>/homography.json`).
    #[arg(long)]
    pub homography: Option<PathBuf>,
    /// Clock model file (defaults to `<episode>/clock_model.json`).
    #[arg(long)]
    pub clock_model: Option<PathBuf>,
    /// Explicit start of the first window, event clock microseconds.
    #[arg(long)]
    pub t0: Option<u64>,
    #[arg(long, value_enum, default_value_t = LabelSource::Odometry)]
    pub label_source: LabelSource,
    /// Fail instead of clamping histogram counts at 65535.
    #[arg(long)]
    pub no_saturate: bool,
    /// Split tag for a single-episode build.
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKey {
    Lighting,
    Path,
    Split,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    CentroidPid,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Container directory; repeat for several.
    #[arg(long = "container", required = true)]
    pub containers: Vec<PathBuf>,
    /// Predictions CSV (`frame,v_pred,w_pred`), one per container, in order.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    /// Also score a reference controller.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub group_by: Vec<GroupKey>,
    /// Write the grouped report as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Write the grouped report as CSV.
    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    /// Write baseline predictions here, one CSV per container
    /// (`<dir>/<container name>.csv`).
    #[arg(long)]
    pub baseline_predictions: Option<PathBuf>,
    #[arg(long, default_value_t = 1.2)]
    pub pid_kp: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pid_ki: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pid_kd: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pid_v_ref: f64,
    /// Frames with fewer events repeat the previous command.
    #[arg(long, default_value_t = 50)]
    pub pid_activity_floor: u64,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Container directory.
    #[arg(long)]
    pub container: PathBuf,
}

pub struct Globals {
    pub json: bool,
    pub jobs: usize,
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let globals = Globals {
        json: cli.json,
        jobs: cli.jobs,
        seed: cli.seed,
    };
    let result: Result<(), CliError> = match &cli.command {
        Command::Synth(a) => commands::synth(&globals, a),
        Command::Align(a) => commands::align(&globals, a),
        Command::Build(a) => commands::build(&globals, a),
        Command::Eval(a) => commands::eval(&globals, a),
        Command::Inspect(a) => commands::inspect(&globals, a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            if globals.json {
                println!(
                    "{}",
                    serde_json::json!({"ok": false, "exit_code": e.code, "error": e.message})
                );
            }
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
