//! `prefbench`: maps, segment sampling, synthetic datasets, reward learning,
//! evaluation, analysis reports, standalone statistical tests and the
//! elicitation service.

mod commands;
mod parse;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use prefbench_core::preference::ModelKind;

#[derive(Parser)]
#[command(name = "prefbench", version, about = "Reward learning from pairwise segment preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a map with its fingerprint and optimal state values.
    Map(MapArgs),
    /// Sample segment pairs and print their statistics as JSON lines.
    Segments(SegmentsArgs),
    /// Generate a labeled synthetic preference dataset.
    Synth(SynthArgs),
    /// Learn reward weights from a preference dataset.
    Train(TrainArgs),
    /// Normalized return of the maxent policy planned under given weights.
    Eval(EvalArgs),
    /// Likelihood, accuracy, test and partition report over datasets.
    Analyze(AnalyzeArgs),
    /// Run one nonparametric test on numbers given on the command line.
    Stats(StatsArgs),
    /// Run the elicitation HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct MapOpt {
    /// Built-in map name (delivery, teach_coins, teach_brick) or a path to a map file.
    #[arg(long, default_value = "delivery")]
    map: String,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    map: MapOpt,
    /// Six comma-separated weights; defaults to the ground truth.
    #[arg(long, value_parser = parse::weights)]
    weights: Option<prefbench_core::LinearReward>,
    #[arg(long, value_enum, default_value_t = TextOrJson::Text)]
    format: TextOrJson,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairKind {
    /// Same start state, random non-terminating actions.
    Random,
    /// Independently drawn start states.
    DistinctStarts,
    /// One segment ends at a goal.
    Goal,
    /// One segment ends at a sheep.
    Sheep,
}

#[derive(Args)]
struct SegmentsArgs {
    #[command(flatten)]
    map: MapOpt,
    #[arg(long, value_enum, default_value_t = PairKind::Random)]
    kind: PairKind,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    map: MapOpt,
    /// Annotator preference model.
    #[arg(long, value_parser = parse::model)]
    model: ModelKind,
    /// Boltzmann scale; noiseless labels when omitted.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value_t = 428)]
    random: usize,
    #[arg(long, default_value_t = 72)]
    terminal: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append this many noiseless goal-terminal pairs.
    #[arg(long, default_value_t = 0)]
    augment: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SfOpt {
    /// Candidate policies for the soft regret values.
    #[arg(long, default_value_t = prefbench_core::planner::DEFAULT_CANDIDATES)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    sf_seed: u64,
    /// Successor-feature cache: read when present, written otherwise.
    #[arg(long)]
    sf_cache: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    map: MapOpt,
    /// JSONL preference dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse::model)]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[command(flatten)]
    sf: SfOpt,
    /// Also report the normalized return of the learned weights.
    #[arg(long)]
    eval: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    map: MapOpt,
    /// Six comma-separated weights.
    #[arg(long, value_parser = parse::weights, conflicts_with = "result", required_unless_present = "result")]
    weights: Option<prefbench_core::LinearReward>,
    /// JSON output of `prefbench train`.
    #[arg(long)]
    result: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    map: MapOpt,
    /// `name=path` of a JSONL dataset; repeat for several conditions.
    #[arg(long = "data", value_parser = parse::named_path, required = true)]
    data: Vec<(String, PathBuf)>,
    #[arg(long, value_delimiter = ',', value_parser = parse::model, default_value = "partial_return,regret")]
    models: Vec<ModelKind>,
    /// Condition every other one is tested against.
    #[arg(long)]
    control: Option<String>,
    /// Partition counts for the learning experiment; skipped when absent.
    #[arg(long, value_delimiter = ',')]
    partitions: Vec<usize>,
    /// Shuffle seeds, as a list or an inclusive range such as `1-10`.
    #[arg(long, value_parser = parse::seeds, default_value = "1-10")]
    seeds: parse::Seeds,
    /// Seed of the subsampling that equalizes dataset sizes.
    #[arg(long, default_value_t = 0)]
    subsample_seed: u64,
    #[command(flatten)]
    sf: SfOpt,
    #[arg(long, value_enum, default_value_t = ReportFormatArg::Json)]
    format: ReportFormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct StatsArgs {
    #[command(subcommand)]
    test: StatsTest,
}

#[derive(Subcommand)]
enum StatsTest {
    /// Two unpaired samples.
    MannWhitney {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        y: Vec<f64>,
    },
    /// Paired samples, `x[i]` against `y[i]`.
    Wilcoxon {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        y: Vec<f64>,
    },
    /// 2x2 table given row-major as `a,b,c,d`.
    Fisher {
        #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
        table: Vec<u64>,
    },
    Spearman {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        y: Vec<f64>,
        /// Enumerate every pairing instead of the t approximation.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Args)]
struct ServeArgs {
    /// Service TOML; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    bind: Option<String>,
    /// Overrides the configured event log path.
    #[arg(long)]
    store: Option<PathBuf>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Map(a) => commands::map(a),
        Command::Segments(a) => commands::segments(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Stats(a) => commands::stats(a),
        Command::Serve(a) => commands::serve(a),
    }
}
