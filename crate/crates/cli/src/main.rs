mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Three-stage multi-class multi-object tracking pipeline.
///
/// Stages exchange MOT text files, so subcommands compose:
/// sim -> track -> link -> post -> eval.
#[derive(Parser)]
#[command(name = "mcmot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stage 1: online tracking over a detection file.
    Track(TrackArgs),
    /// Stage 2: link tracklets into trajectories.
    Link(LinkArgs),
    /// Stage 3: denoise, interpolate and rescore trajectories.
    Post(PostArgs),
    /// Fuse two or more result files with TrackNMS.
    Fuse(FuseArgs),
    /// Trajectory-mAP evaluation against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scenario (ground truth, detections, sidecars).
    Sim(SimArgs),
}

#[derive(Args)]
struct Common {
    /// Key-value config file (see README for the schema).
    #[arg(long)]
    config: Option<String>,
    /// Override one config value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Random seed; overrides the config file seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    common: Common,
    /// Detection file (MOT rows, target id ignored).
    #[arg(long)]
    det: String,
    /// Embedding sidecar for the detection file.
    #[arg(long)]
    embeddings: Option<String>,
    /// Camera transform sidecar.
    #[arg(long)]
    transforms: Option<String>,
    /// Output tracklet file.
    #[arg(long)]
    out: String,
    /// Also write the matched embeddings re-keyed to the output file.
    #[arg(long)]
    out_embeddings: Option<String>,
    /// Apply class voting and emit per-class rows (final-style output).
    #[arg(long)]
    vote: bool,
}

#[derive(Args)]
struct LinkArgs {
    #[command(flatten)]
    common: Common,
    /// Tracklet file from the track stage.
    #[arg(long)]
    tracklets: String,
    /// Embedding sidecar keyed to the tracklet file.
    #[arg(long)]
    embeddings: Option<String>,
    /// Output trajectory file.
    #[arg(long)]
    out: String,
    /// Apply class voting and emit per-class rows (final-style output).
    #[arg(long)]
    vote: bool,
}

#[derive(Args)]
struct PostArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory file to refine.
    #[arg(long)]
    input: String,
    /// Output trajectory file.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    common: Common,
    /// Result file; give two or more.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// Output trajectory file.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Prediction file.
    #[arg(long)]
    pred: String,
    /// Ground-truth annotation file.
    #[arg(long)]
    gt: String,
    /// Write the machine-readable report here.
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Directory for gt.txt, det.txt, emb.txt and cam.txt.
    #[arg(long)]
    out_dir: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track(args) => commands::run_track(&args),
        Command::Link(args) => commands::run_link(&args),
        Command::Post(args) => commands::run_post(&args),
        Command::Fuse(args) => commands::run_fuse(&args),
        Command::Eval(args) => commands::run_eval(&args),
        Command::Sim(args) => commands::run_sim(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
