use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "causalq", version, about = "Causal Q-learning for pickup-and-delivery routing")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file supplying any flag of the subcommand; flags given on
    /// the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random-walk transition dataset.
    Sample(SampleArgs),
    /// Learn a causal DAG from a dataset.
    Discover(DiscoverArgs),
    /// Fit conditional probability tables over a DAG.
    Fit(FitArgs),
    /// Train a Q-table.
    Train(TrainArgs),
    /// Greedy evaluation of a trained Q-table against the shortest-path oracle.
    Eval(EvalArgs),
    /// Step-by-step record of one greedy episode.
    Trace(TraceArgs),
    /// Time-to-optimal-tour study over grid sizes.
    BenchScaling(BenchArgs),
    /// Compare trained routes with Dijkstra on a road graph.
    RouteCompare(RouteArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnvArgs {
    /// taxi5, gridRxC, map:PATH, graphN or graph:PATH.
    #[arg(long, default_value = "taxi5")]
    pub env: String,
    /// Seed for generated grid walls and synthetic graphs.
    #[arg(long, default_value_t = 0)]
    pub env_seed: u64,
    /// Per-episode step budget (defaults to the environment's own).
    #[arg(long)]
    pub max_steps: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TierArg {
    Core,
    Positional,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "core")]
    pub tier: TierArg,
    /// Add a reward-class goal node.
    #[arg(long)]
    pub reward_node: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TabuPreset {
    /// Role-based prohibitions for the transition schema.
    Transition,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StructurePreset {
    Default,
    /// Low penalty and threshold that keep the weak pickup edge.
    Taxi,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiscoverArgs {
    /// Dataset CSV written by `sample` (its `.meta.json` sidecar must sit next to it).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "transition")]
    pub tabu_preset: TabuPreset,
    /// JSON tabu specification; replaces the preset.
    #[arg(long)]
    pub tabu: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    pub preset: StructurePreset,
    #[arg(long)]
    pub l1_penalty: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_outer_iterations: Option<usize>,
    #[arg(long)]
    pub h_tolerance: Option<f64>,
    /// DAG JSON; a DOT rendering is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub dag: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Re-express the DAG over the dataset's schema first (grid to graph).
    #[arg(long)]
    pub transfer: bool,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long, default_value_t = 64)]
    pub max_cardinality: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Qcogni,
    Qlearning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerPreset {
    Default,
    /// Full-step updates and a high exploration floor for road graphs.
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalAdvanceArg {
    Literal,
    Confirmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingArg {
    EveryStep,
    InferBranch,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LearnerArgs {
    #[arg(long, value_enum, default_value = "default")]
    pub learner_preset: LearnerPreset,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub discount: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_min: Option<f64>,
    #[arg(long)]
    pub epsilon_decay: Option<f64>,
    #[arg(long)]
    pub infer_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub goal_advance: Option<GoalAdvanceArg>,
    #[arg(long, value_enum)]
    pub reward_scaling: Option<ScalingArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GuideArgs {
    /// Fitted network JSON; enables the causal guide.
    #[arg(long)]
    pub bn: Option<PathBuf>,
    #[arg(long, default_value = "pax_in_taxi_next,dropoff_next")]
    pub goals: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, value_enum, default_value = "qcogni")]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub guide: GuideArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Q-table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Learning-curve CSV (defaults to `<out>` with a `.curve.csv` suffix).
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub qtable: PathBuf,
    #[command(flatten)]
    pub guide: GuideArgs,
    /// Number of seeded evaluation configs (grid) or random trips (graph).
    #[arg(long, default_value_t = 100)]
    pub configs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub seed: u64,
    /// Trips CSV (`pickup,dropoff`) for graph environments.
    #[arg(long)]
    pub trips: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub qtable: PathBuf,
    #[command(flatten)]
    pub guide: GuideArgs,
    /// Seed of the start config (grid) or trip (graph).
    #[arg(long, default_value_t = 10_000)]
    pub seed: u64,
    /// JSON-lines trace.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Grid sides, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub sizes: Vec<usize>,
    /// Any of qcogni, qlearning, dijkstra, astar.
    #[arg(long, value_delimiter = ',', default_value = "qcogni,qlearning,dijkstra,astar")]
    pub algorithms: Vec<String>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4096)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 20_000)]
    pub max_episodes: usize,
    #[arg(long, default_value_t = 120.0)]
    pub max_seconds: f64,
    #[arg(long, default_value_t = 100_000)]
    pub walk_steps: usize,
    /// DAG over the core schema; discovered on the taxi map when omitted.
    #[arg(long)]
    pub dag: Option<PathBuf>,
    /// Run cells one at a time.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RouteArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long)]
    pub qtable: PathBuf,
    #[command(flatten)]
    pub guide: GuideArgs,
    /// Vanilla Q-learning table to compare as well.
    #[arg(long)]
    pub vanilla_qtable: Option<PathBuf>,
    /// Trips CSV (`pickup,dropoff`); random trips are drawn when omitted.
    #[arg(long)]
    pub trips: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub trip_count: usize,
    #[arg(long, default_value_t = 99)]
    pub trip_seed: u64,
    /// Comparison CSV; `_summary.csv` and `_routes.csv` siblings are written too.
    #[arg(long)]
    pub out: PathBuf,
}
