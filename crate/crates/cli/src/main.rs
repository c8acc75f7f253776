//! `spcc`: batch front end for conversion, validation, rendering, metrics,
//! annotation and dataset synthesis.

mod commands;
mod io;
mod remote;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "spcc", version, about = "Structured parametric CAD code toolkit")]
struct Cli {
    /// Worker threads (also the number of in-flight service requests).
    #[arg(long, global = true, default_value_t = 8)]
    jobs: usize,
    /// Exit with status 1 when any item fails.
    #[arg(long, global = true)]
    strict: bool,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between JSON models, plain code and SPCC.
    Convert(ConvertArgs),
    /// Check that models parse, validate and build; reports the success ratio.
    Validate(ValidateArgs),
    /// Print the component partition of a model as JSON.
    Segment(SegmentArgs),
    /// Render a model, a highlighted component or a sketch to PNG.
    Render(RenderArgs),
    /// Sample a surface point cloud.
    Sample(SampleArgs),
    /// Compute the full metric report for generated against reference samples.
    Metrics(MetricsArgs),
    /// Annotate models through the annotation service.
    Annotate(AnnotateArgs),
    /// Build the SPCC corpus or the instruction datasets.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// Group corpus documents into similarity-ordered training contexts.
    Group(GroupArgs),
    /// Drop exact duplicates and trivial models.
    Dedup(DedupArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Code,
    Spcc,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Tilde,
    Dot,
}

#[derive(Args)]
pub struct ConvertArgs {
    /// A `.json` model or a code/SPCC text file.
    input: PathBuf,
    #[arg(long, value_enum)]
    to: Format,
    /// Annotation records (JSONL from `annotate`) for SPCC output.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tilde")]
    mode: Mode,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Directory of model files, or a single file.
    input: PathBuf,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct SegmentArgs {
    input: PathBuf,
    #[arg(long, default_value_t = spcc_core::segment::DEFAULT_THRESHOLD)]
    threshold: usize,
}

#[derive(Args)]
pub struct RenderArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Outline view of this component (1-based).
    #[arg(long, conflicts_with_all = ["component", "sketch"])]
    highlight: Option<usize>,
    /// This component (1-based) alone.
    #[arg(long, conflicts_with = "sketch")]
    component: Option<usize>,
    /// Sketch of this pair (1-based).
    #[arg(long)]
    sketch: Option<usize>,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_IMAGE_SIZE)]
    size: u32,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_RESOLUTION)]
    resolution: usize,
}

#[derive(Args)]
pub struct SampleArgs {
    input: PathBuf,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_SAMPLE_COUNT)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Little-endian f32 triples instead of `x y z` lines.
    #[arg(long)]
    binary: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Generated samples.
    #[arg(long)]
    gen: PathBuf,
    /// Reference samples.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Pair generated and reference items by sorted position.
    #[arg(long)]
    aligned: bool,
    /// Training models for the novelty score.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = spcc_core::metrics::DEFAULT_PARAM_TOLERANCE)]
    tolerance: i64,
    #[arg(long, default_value_t = spcc_core::metrics::DEFAULT_JSD_GRID)]
    jsd_grid: usize,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_SAMPLE_COUNT)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClientKind {
    /// The service at SPCC_VLM_URL.
    Remote,
    /// Deterministic local replies; no network.
    Offline,
}

#[derive(Args, Clone)]
pub struct ServiceArgs {
    /// Model name sent to the annotation service.
    #[arg(long, default_value = spcc_core::annotate::DEFAULT_MODEL_NAME)]
    vlm_model: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Exemplar bank (JSONL); the built-in bank otherwise.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Complexity thresholds on the command count.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = spcc_core::annotate::DEFAULT_COMPLEXITY_THRESHOLDS)]
    thresholds: Vec<usize>,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_IMAGE_SIZE)]
    size: u32,
    #[arg(long, default_value_t = spcc_core::geometry::DEFAULT_RESOLUTION)]
    resolution: usize,
}

#[derive(Args)]
pub struct AnnotateArgs {
    input: PathBuf,
    /// Directory for annotations.jsonl, exchanges.jsonl and quarantine.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "remote")]
    client: ClientKind,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write the abstract-plus-detailed and abstract-only documents.
    Corpus(CorpusArgs),
    /// Write the seven-task instruction dataset as JSONL.
    Instructions(InstructionArgs),
}

#[derive(Args)]
pub struct CorpusArgs {
    input: PathBuf,
    /// Annotation records from `annotate`.
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeKind {
    Heuristic,
    Vlm,
}

#[derive(Args)]
pub struct InstructionArgs {
    input: PathBuf,
    /// Annotation records; the offline annotator runs when absent.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "heuristic")]
    judge: JudgeKind,
    /// Records kept per task.
    #[arg(long)]
    quota: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Completion prefix ratio range.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.30, 0.50])]
    completion_range: Vec<f64>,
    #[command(flatten)]
    service: ServiceArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedKind {
    Offline,
    Remote,
}

#[derive(Args)]
pub struct GroupArgs {
    /// Directory of corpus documents.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = spcc_core::synth::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = spcc_core::synth::DEFAULT_NEIGHBORS)]
    neighbors: usize,
    #[arg(long, value_enum, default_value = "offline")]
    embed: EmbedKind,
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, default_value_t = 224)]
    size: u32,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
}

#[derive(Args)]
pub struct DedupArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build_global() {
        log::debug!("thread pool: {e}");
    }
    let result = match cli.command {
        Command::Convert(a) => commands::convert(a),
        Command::Validate(a) => commands::validate(a),
        Command::Segment(a) => commands::segment(a),
        Command::Render(a) => commands::render(a),
        Command::Sample(a) => commands::sample(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Annotate(a) => commands::annotate(a, cli.jobs),
        Command::Synth { command: SynthCommand::Corpus(a) } => commands::synth_corpus(a),
        Command::Synth { command: SynthCommand::Instructions(a) } => commands::synth_instructions(a, cli.jobs),
        Command::Group(a) => commands::group(a),
        Command::Dedup(a) => commands::dedup(a),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} item(s) failed");
            if cli.strict {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => match e.downcast_ref::<commands::UsageError>() {
            Some(u) => {
                eprintln!("error: {u}");
                eprintln!("usage: spcc [--jobs N] [--strict] [-v] <command> ... (see spcc --help)");
                ExitCode::from(2)
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
