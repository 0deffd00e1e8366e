mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bimanual demonstration augmentation: parse, ground, augment, verify.
#[derive(Debug, Parser)]
#[command(name = "bimaug", version)]
pub struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic task into a demo bundle with its ground truth.
    GenSynthetic(GenArgs),
    /// Lift a demo bundle into a state-action trajectory.
    Parse(ParseArgs),
    /// Split a trajectory into motion, skill and idle segments.
    Ground(GroundArgs),
    /// Generate and export an augmented dataset.
    Augment(AugmentArgs),
    /// Regenerate a dataset from its provenance and check every demo.
    Verify(VerifyArgs),
    /// Summarize an exported dataset.
    Stats(StatsArgs),
    /// Time augmentation of a synthetic demo.
    Bench(BenchArgs),
    /// Straight-line planner speaking the external planner protocol.
    #[command(hide = true)]
    PlanLinear,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Task id: pour or handover.
    #[arg(long, default_value = "pour")]
    task: String,
    /// Std-dev of depth noise, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Demo bundle directory.
    bundle: PathBuf,
    /// ParseConfig JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    control_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Grounding inputs shared by several commands.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Trajectory JSON.
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Object frames (`{"objects": [...]}`); default: keypoint centroids at t = 0.
    #[arg(long)]
    objects: Option<PathBuf>,
    /// GroundingConfig JSON; `--eps-*` flags override its values.
    #[arg(long)]
    grounding: Option<PathBuf>,
    #[arg(long)]
    eps_skill: Option<f64>,
    #[arg(long)]
    eps_sync: Option<f64>,
}

#[derive(Debug, Args)]
struct GroundArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Directory of `object_<k>.png` masks; needs `--bundle`.
    #[arg(long, requires = "bundle", conflicts_with = "objects")]
    masks: Option<PathBuf>,
    /// Bundle supplying camera and first depth frame for `--masks`.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlannerArgs {
    /// External planner program; default: built-in straight line.
    #[arg(long)]
    planner: Option<PathBuf>,
    /// Argument passed to the planner program (repeatable).
    #[arg(long = "planner-arg", allow_hyphen_values = true)]
    planner_args: Vec<String>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// AugmentationSpec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    velocity: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Symmetry plane as `nx,ny,nz,offset`.
    #[arg(long)]
    mirror_plane: Option<String>,
    /// ExportOptions JSON; `--noise` and `--dropout` override its values.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Keypoint noise std-dev at export, meters.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[command(flatten)]
    planner: PlannerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Dataset directory written by `augment`.
    dataset: PathBuf,
    #[arg(long)]
    traj: PathBuf,
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    objects: Option<PathBuf>,
    /// Also replay every demo against this synthetic task's success predicate.
    #[arg(long)]
    task: Option<String>,
    /// Grasp radius for replay, meters.
    #[arg(long, default_value_t = 0.03)]
    grasp_eps: f64,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    dataset: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "pour")]
    task: String,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the timings as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const VALIDATION: u8 = 2;
    pub const VERIFICATION: u8 = 3;
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(exit::USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(exit::USAGE);
        }
    }
    let result = match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::Parse(a) => commands::parse(a),
        Command::Ground(a) => commands::ground(a),
        Command::Augment(a) => commands::augment(a),
        Command::Verify(a) => commands::verify(a),
        Command::Stats(a) => commands::stats(a),
        Command::Bench(a) => commands::bench(a),
        Command::PlanLinear => commands::plan_linear(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit::VALIDATION)
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}
