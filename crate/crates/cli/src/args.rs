use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Search first-person videos for the camera wearer of a query video.
#[derive(Debug, Parser)]
#[command(name = "egocorr", version = concat!(env!("CARGO_PKG_VERSION"), " (egocorr-cli)"))]
pub struct Cli {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the global motion pattern of one video.
    Motion(MotionArgs),
    /// Track candidates in videos and add them to a repository.
    Extract(ExtractArgs),
    /// Fit the targetness prior from labeled candidates.
    TrainPrior(TrainPriorArgs),
    /// Score an observer's candidates against a query video.
    Score(ScoreArgs),
    /// Render per-frame targetness maps from candidate scores.
    Map(MapArgs),
    /// Threshold targetness maps into binary masks.
    Mask(MaskArgs),
    /// Pixel AUC of maps against ground-truth masks.
    Auc(AucArgs),
    /// Video-to-video affinity matrix over a repository.
    Affinity(AffinityArgs),
    /// Rank videos by affinity to a query video.
    Retrieve(RetrieveArgs),
    /// Group videos by affinity propagation.
    Cluster(ClusterArgs),
    /// Render a synthetic session with ground truth.
    Synth(SynthArgs),
    /// Evaluate method variants on a synthetic session.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Motion(_) => "motion",
            Command::Extract(_) => "extract",
            Command::TrainPrior(_) => "train-prior",
            Command::Score(_) => "score",
            Command::Map(_) => "map",
            Command::Mask(_) => "mask",
            Command::Auc(_) => "auc",
            Command::Affinity(_) => "affinity",
            Command::Retrieve(_) => "retrieve",
            Command::Cluster(_) => "cluster",
            Command::Synth(_) => "synth",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Args)]
pub struct MotionArgs {
    /// Frame directory.
    #[arg(long)]
    pub video: PathBuf,
    /// Output CSV (`t,u,v,failed`).
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of dense flow caches, read when present and written otherwise.
    #[arg(long, value_name = "DIR")]
    pub flow_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Frame directories; repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub video: Vec<PathBuf>,
    /// Repository root.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the sketch section of the candidate store.
    #[arg(long)]
    pub no_sketch: bool,
    /// Root for per-video dense flow caches.
    #[arg(long, value_name = "DIR")]
    pub flow_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPriorArgs {
    /// Candidate store; pair each with a `--masks` directory.
    #[arg(long)]
    pub store: Vec<PathBuf>,
    /// Directory of `mask_%06d.pgm` files marking the people in the matching store's video.
    #[arg(long)]
    pub masks: Vec<PathBuf>,
    /// Synthetic session directory; repeatable.
    #[arg(long)]
    pub scene: Vec<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TwoStepArgs {
    /// Prune with the sketch upper bound before exact scoring.
    #[arg(long)]
    pub two_step: bool,
    /// Percentage of candidates scored exactly (default from config).
    #[arg(long = "top-percent", visible_alias = "P", value_name = "P")]
    pub top_percent: Option<f64>,
    /// Sketch pieces (default from config).
    #[arg(long = "pieces", visible_alias = "K", value_name = "K")]
    pub pieces: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Query: a frame directory, an extracted video directory or a motion CSV.
    #[arg(long)]
    pub query: PathBuf,
    /// Extracted observer directory.
    #[arg(long)]
    pub observer: PathBuf,
    /// Prior model JSON; without it every prior is 1.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[command(flatten)]
    pub two_step: TwoStepArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Candidate scores CSV.
    #[arg(long)]
    pub scores: PathBuf,
    /// Extracted observer directory the scores refer to.
    #[arg(long)]
    pub observer: PathBuf,
    /// Render every N-th frame.
    #[arg(long, default_value_t = 1, conflicts_with = "frames")]
    pub every: usize,
    /// Comma-separated frame indices.
    #[arg(long, value_delimiter = ',')]
    pub frames: Option<Vec<usize>>,
    /// Output directory for `map_%06d.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Directory of `map_%06d.pgm`.
    #[arg(long)]
    pub maps: PathBuf,
    /// Score threshold (default from config).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Output directory for `mask_%06d.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AucArgs {
    /// Directory of `map_%06d.pgm`.
    #[arg(long)]
    pub maps: PathBuf,
    /// Directory of `mask_%06d.pgm`; frames present in both are evaluated.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Likelihood,
    Posterior,
}

#[derive(Debug, Args)]
pub struct AffinityArgs {
    /// Repository manifest written by `extract`.
    #[arg(long)]
    pub repo: PathBuf,
    /// Keep the directed matrix instead of symmetrizing it.
    #[arg(long)]
    pub asymmetric: bool,
    #[command(flatten)]
    pub two_step: TwoStepArgs,
    /// Candidate value feeding the affinity.
    #[arg(long, value_enum, default_value = "likelihood")]
    pub source: SourceArg,
    /// Prior model JSON; defaults to the repository's when it has one.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Affinity CSV.
    #[arg(long)]
    pub affinity: PathBuf,
    /// Source id of the query video.
    #[arg(long)]
    pub query: String,
    /// Comma-separated source ids relevant to the query, for R-precision.
    #[arg(long, value_delimiter = ',')]
    pub relevant: Option<Vec<String>>,
    /// Optional JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Affinity CSV.
    #[arg(long)]
    pub affinity: PathBuf,
    /// Self-similarity (default: median of the off-diagonal entries).
    #[arg(long)]
    pub preference: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spec JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub people: Option<usize>,
    /// Group sizes, e.g. `3,3,3`; people are assigned in order.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub distractors: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Session directory written by `synth`.
    #[arg(long)]
    pub dir: PathBuf,
    /// Variants: c, c+g, asym, two-step or two-step:P:K; repeatable.
    #[arg(long, value_delimiter = ',')]
    pub variant: Vec<String>,
    /// Prior model for c+g; trained on a held-out session when absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
