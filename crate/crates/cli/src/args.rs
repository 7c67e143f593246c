use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "veclm", version, about = "Language-model-driven IPv6 target generation")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct Global {
    /// Global RNG seed; every stage derives its streams from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker cap. All reductions currently run on one thread
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Require bit-reproducible execution
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// key=value file; flags on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a synthetic universe and split it into seeds and hidden addresses
    Synth(SynthArgs),
    /// Train address-word vectors on a seed file
    Embed(EmbedArgs),
    /// Train the encoder-decoder model on seeds and word vectors
    Train(TrainArgs),
    /// Generate candidate addresses
    Generate(GenerateArgs),
    /// Score candidates against seeds and a universe
    Eval(EvalArgs),
    /// Cluster address vectors and compare against the one-hot baseline
    Cluster(ClusterArgs),
    /// Temperature sweep and candidate-budget growth curve
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Embed(_) => "embed",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Eval(_) => "eval",
            Command::Cluster(_) => "cluster",
            Command::Sweep(_) => "sweep",
        }
    }
}

pub const SUBCOMMANDS: [&str; 7] = ["synth", "embed", "train", "generate", "eval", "cluster", "sweep"];

#[derive(Clone, Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory for universe.txt, seeds.txt and hidden.txt
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub total: usize,
    #[arg(long, default_value_t = 20)]
    pub prefixes: usize,
    #[arg(long, default_value_t = 0.4)]
    pub seed_fraction: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub seeds: PathBuf,
    /// vectors.tsv to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Input words per optimizer step
    #[arg(long, default_value_t = 1)]
    pub batch_words: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    /// Checkpoint directory to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub layers: usize,
    #[arg(long, default_value_t = 10)]
    pub heads: usize,
    #[arg(long, default_value_t = 400)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Sequences per epoch; omit for one full pass over the training split
    #[arg(long)]
    pub epoch_size: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 100)]
    pub warmup_steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub validation_fraction: f64,
    #[arg(long, value_parser = ["linear", "sigmoid"], default_value = "linear")]
    pub output_activation: String,
    #[arg(long)]
    pub no_positional_encoding: bool,
    /// Train the word vectors jointly with the model
    #[arg(long)]
    pub fine_tune: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ModelInputs {
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ModelInputs,
    /// candidates.txt to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0.01)]
    pub temperature: f64,
    #[arg(long, value_parser = ["greedy", "random", "temperature"], default_value = "temperature")]
    pub strategy: String,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub universe: PathBuf,
    /// metrics.json to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// Addresses to cluster
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    /// Output directory for clusters.tsv, clusters-onehot.tsv and summary.json
    #[arg(long)]
    pub out: PathBuf,
    /// DBSCAN radius; defaults to the k-distance elbow
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub min_pts: usize,
    #[arg(long, value_parser = ["euclidean", "cosine"], default_value = "euclidean")]
    pub metric: String,
    /// Seeded subsample size; 0 keeps every address
    #[arg(long, default_value_t = 2000)]
    pub sample: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub inputs: ModelInputs,
    #[arg(long)]
    pub universe: PathBuf,
    /// sweep.json to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05,0.1,0.5,1,5")]
    pub temperatures: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, value_parser = ["greedy", "random", "temperature"], default_value = "temperature")]
    pub strategy: String,
    /// Candidate budgets for the growth curve, at the default temperature
    #[arg(long, value_delimiter = ',', default_value = "100,250,500,1000")]
    pub budgets: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub temperature: f64,
}
