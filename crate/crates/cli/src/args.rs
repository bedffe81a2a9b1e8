use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcsft_core::grpo::GrpoConfig;
use dcsft_core::verifiers::{DEFAULT_IOU_THRESHOLD, DEFAULT_MAX_PIXELS};
use dcsft_core::SamplingParams;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "dcsft", version, about = "Difficulty-curated SFT data pipeline and micro-lab")]
pub struct Cli {
    /// File that receives one JSON record per run.
    #[arg(long, global = true, env = "DCSFT_RUN_LOG", default_value = "dcsft-runs.jsonl")]
    pub run_log: PathBuf,

    /// Root seed; every random draw of the run is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw g responses per sample from an OpenAI-compatible endpoint.
    Sample(SampleArgs),
    /// Verify responses, bucket by difficulty and emit a curated SFT set.
    Curate(CurateArgs),
    /// Difficulty histogram with a few example ids per bucket.
    Stats(StatsArgs),
    /// Group-normalized advantages for one reward vector.
    Advantage(AdvantageArgs),
    /// Run a micro-lab experiment from a TOML config.
    Lab(LabArgs),
    /// Serve a scripted mock endpoint until interrupted.
    #[command(hide = true)]
    MockServe(MockServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Dataset JSONL.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub base_url: String,
    #[arg(long, default_value = "default")]
    pub model: String,
    #[arg(long, default_value_t = SamplingParams::DEFAULT_G)]
    pub g: usize,
    #[arg(long, default_value_t = SamplingParams::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = SamplingParams::DEFAULT_TOP_P)]
    pub top_p: f64,
    /// Response sets in sample order.
    #[arg(long, default_value = "responses.jsonl")]
    pub out: PathBuf,
    /// Response cache; defaults to `<out>.cache.jsonl`.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub max_in_flight: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Send one request per response instead of asking for `n` at once.
    #[arg(long)]
    pub no_n: bool,
    /// Environment variable holding the API key.
    #[arg(long, default_value = dcsft_sampler::config::API_KEY_ENV)]
    pub api_key_env: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    SftM,
    SftEm,
    HardRatio,
    Bucket,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketArg {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceArg {
    None,
    Min,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Dataset JSONL the responses were drawn for.
    #[arg(long)]
    pub data: PathBuf,
    /// Response sets written by `sample`.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    /// Pixel budget that boxes are rescaled into before comparison.
    #[arg(long, default_value_t = DEFAULT_MAX_PIXELS)]
    pub max_pixels: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CurateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub verify: VerifyArgs,
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    /// Bucket kept by `--variant bucket`.
    #[arg(long, value_enum, required_if_eq("variant", "bucket"))]
    pub bucket: Option<BucketArg>,
    /// Hard fraction for `--variant hard-ratio`.
    #[arg(long, required_if_eq("variant", "hard-ratio"))]
    pub rho: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    pub balance: BalanceArg,
    #[arg(long)]
    pub target_size: Option<usize>,
    /// Curated chat-format JSONL.
    #[arg(long, default_value = "curated.jsonl")]
    pub out: PathBuf,
    /// Defaults to `<out stem>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write the verified response sets here.
    #[arg(long)]
    pub verified_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub verify: VerifyArgs,
    /// Example ids shown per bucket.
    #[arg(long, default_value_t = 3)]
    pub examples: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdArg {
    Population,
    Sample,
}

#[derive(Debug, Args, Serialize)]
pub struct AdvantageArgs {
    /// Comma-separated rewards of one group.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, required = true)]
    pub rewards: Vec<f64>,
    #[arg(long, default_value_t = GrpoConfig::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "population")]
    pub std: StdArg,
}

#[derive(Debug, Args, Serialize)]
pub struct LabArgs {
    /// Experiment TOML; omitted keys take the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for per-arm CSV and summary JSON.
    #[arg(long, default_value = "lab-out")]
    pub out: PathBuf,
    /// Sweep the hard ratio over these values instead of running the
    /// config's own plan. Bare `--sweep` uses 0,0.05,0.135,0.25.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 0..,
        default_missing_values = ["0", "0.05", "0.135", "0.25"]
    )]
    pub sweep: Option<Vec<f64>>,
    /// Override the config's seed count.
    #[arg(long)]
    pub n_seeds: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct MockServeArgs {
    /// Mock script JSON.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long, default_value_t = 8000)]
    pub port: u16,
}
