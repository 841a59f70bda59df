use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scribble_core::data::ShapeKind;
use scribble_core::eval::PromptMode;
use scribble_core::net::NetConfig;
use scribble_core::scribble::{GenParams, ScribbleStyle};
use scribble_core::segment::{Connectivity, GeodesicParams, OracleParams, SegmenterKind};

#[derive(Parser, Debug)]
#[command(
    name = "scribble-bench",
    version,
    about = "Scribble prompts, interactive refinement benchmarks and a toy refinement network"
)]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, env = "SCRIBBLE_BENCH_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Output path. Single-file outputs go to stdout when omitted; `synth-data` defaults to ./synthetic
    /// and `scribble` to the prefix ./scribble.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Log verbosity on stderr.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,

    /// JSON object of flag values (kebab-case keys) applied beneath explicit flags. Default: none.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Turn a ground-truth mask PNG into a scribble map (or corrective scribbles against a prediction).
    Scribble(ScribbleArgs),
    /// Run the interactive refinement protocol over a dataset and write a report.
    Eval(EvalArgs),
    /// Evaluate click prompts at several point densities, one report per density.
    PointsSweep(SweepArgs),
    /// Compare analytic and finite-difference gradients of the toy network.
    Gradcheck(GradcheckArgs),
    /// Train the toy network for one stage on synthetic shapes or a manifest.
    Train(TrainArgs),
    /// Generate a synthetic dataset and its manifest.
    SynthData(SynthArgs),
    /// Start the HTTP session service.
    Serve(ServeArgs),
    /// Convert report JSON into CSV tables or plot series.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// Stroke width in pixels.
    #[arg(long, default_value_t = GenParams::default().stroke_width)]
    pub stroke_width: f64,
    /// Contour level as a fraction of the maximum interior depth.
    #[arg(long, default_value_t = GenParams::default().contour_inward_offset)]
    pub contour_inward_offset: f64,
    /// Wave displacement amplitude in pixels.
    #[arg(long, default_value_t = GenParams::default().wave_amplitude)]
    pub wave_amplitude: f64,
    /// Wave period in pixels of arc length.
    #[arg(long, default_value_t = GenParams::default().wave_period)]
    pub wave_period: f64,
    /// Standard deviation of the vertex jitter in pixels.
    #[arg(long, default_value_t = GenParams::default().perturb_sigma)]
    pub perturb_sigma: f64,
    /// Components smaller than this many pixels get no stroke.
    #[arg(long, default_value_t = GenParams::default().min_component_area)]
    pub min_component_area: usize,
    /// Aspect ratio at or above which a component counts as thin.
    #[arg(long, default_value_t = GenParams::default().thin_aspect)]
    pub thin_aspect: f64,
    /// Solidity at or above which a component counts as compact.
    #[arg(long, default_value_t = GenParams::default().compact_solidity)]
    pub compact_solidity: f64,
}

impl GenArgs {
    pub fn params(&self, seed: u64) -> GenParams {
        GenParams {
            stroke_width: self.stroke_width,
            contour_inward_offset: self.contour_inward_offset,
            wave_amplitude: self.wave_amplitude,
            wave_period: self.wave_period,
            perturb_sigma: self.perturb_sigma,
            min_component_area: self.min_component_area,
            seed,
            thin_aspect: self.thin_aspect,
            compact_solidity: self.compact_solidity,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    /// Side of the square network input.
    #[arg(long, default_value_t = NetConfig::default().input_side)]
    pub input_side: usize,
    /// Embedding width.
    #[arg(long, default_value_t = NetConfig::default().embed_dim)]
    pub embed_dim: usize,
    /// Attention heads.
    #[arg(long, default_value_t = NetConfig::default().attn_heads)]
    pub attn_heads: usize,
    /// LoRA rank.
    #[arg(long, default_value_t = NetConfig::default().lora_rank)]
    pub lora_rank: usize,
    /// LoRA output scaling.
    #[arg(long, default_value_t = NetConfig::default().lora_scale)]
    pub lora_scale: f64,
    /// GroupNorm groups.
    #[arg(long, default_value_t = NetConfig::default().groupnorm_groups)]
    pub groupnorm_groups: usize,
}

impl NetArgs {
    pub fn config(&self) -> NetConfig {
        NetConfig {
            input_side: self.input_side,
            embed_dim: self.embed_dim,
            attn_heads: self.attn_heads,
            lora_rank: self.lora_rank,
            lora_scale: self.lora_scale,
            groupnorm_groups: self.groupnorm_groups,
        }
    }
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("expected 4 or 8, got {s:?}"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    /// Segmentation backend: toynet, geodesic or oracle.
    #[arg(long, default_value = "geodesic")]
    pub backend: SegmenterKind,
    /// Geodesic edge weight on luma differences.
    #[arg(long, default_value_t = GeodesicParams::default().lambda)]
    pub lambda: f64,
    /// Geodesic pixel connectivity (4 or 8).
    #[arg(long, default_value = "8", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
    /// Toy network parameter snapshot. Default: fresh weights from --seed and the network shape flags.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Run the toy network without the fusion gate and memory. Default: off.
    #[arg(long, default_value_t = false)]
    pub baseline: bool,
    /// Oracle fidelity per round, last value repeated.
    #[arg(long, value_delimiter = ',', default_value = "0.7,0.9,1.0")]
    pub oracle_schedule: Vec<f64>,
    /// Boundary patches the oracle can flip.
    #[arg(long, default_value_t = OracleParams::default().patches)]
    pub oracle_patches: usize,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// Full report JSON.
    Json,
    /// Long table method,round,metric,value.
    Csv,
}

#[derive(Args, Debug)]
pub struct ScribbleArgs {
    /// Ground-truth mask PNG (non-zero = foreground).
    #[arg(long)]
    pub mask: PathBuf,
    /// Prediction mask PNG; when given, corrective scribbles on its errors are produced instead. Default: none.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Stroke style: centerline, wave, contour or adaptive.
    #[arg(long, default_value = "adaptive")]
    pub style: ScribbleStyle,
    /// Write RLE JSON instead of a `<out>_pos.png` / `<out>_neg.png` pair. Default: off.
    #[arg(long, default_value_t = false)]
    pub json: bool,
    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    /// Dataset manifest JSON. Default: the built-in synthetic set of 50 shapes at 96 px.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Rounds per target, the initial round included.
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    /// IoU at which a target stops receiving corrections.
    #[arg(long, default_value_t = 0.9)]
    pub tau: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ReportKind::Json)]
    pub format: ReportKind,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Prompt mode: scribble, scribble:<style>, 1pt-cc or <k>pt-ch.
    #[arg(long, default_value = "scribble")]
    pub prompt_mode: PromptMode,
    /// Method label in the report. Default: <backend>/<prompt-mode>.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Clicks per channel per round, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,10,30,50")]
    pub densities: Vec<usize>,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageArg {
    /// Scribble encoder and decoder LoRA.
    #[value(name = "1")]
    One,
    /// Stage 1 plus the fusion gate and memory LoRA.
    #[value(name = "2")]
    Two,
    /// Every parameter.
    All,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Which parameters are checked; the rest must get exactly zero gradient.
    #[arg(long, value_enum, default_value_t = StageArg::Two)]
    pub stage: StageArg,
    /// Unrolled refinement rounds in the checked loss.
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Check at most this many evenly spaced values per tensor. Default: every value.
    #[arg(long)]
    pub max_per_tensor: Option<usize>,
    /// Relative error each module must stay below.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Keep the fusion gate and LoRA up-projections at their zero initialisation. Default: off.
    #[arg(long, default_value_t = false)]
    pub zero_gates: bool,
    /// Parameter snapshot to check. Default: fresh weights from --seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training stage (1 or 2).
    #[arg(long, default_value = "1", value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    /// Optimizer steps.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Decoupled weight decay.
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Unrolled rounds per episode.
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Training manifest. Default: synthetic shapes from --samples and --side.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Synthetic training samples.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Side of synthetic training images.
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    /// Snapshot to continue from. Default: fresh weights from --seed.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Also write the per-step loss trace as CSV here. Default: none.
    #[arg(long)]
    pub losses: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub gen: GenArgs,
}

fn parse_shape(s: &str) -> Result<ShapeKind, String> {
    ShapeKind::ALL
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown shape {s:?}"))
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 96)]
    pub side: usize,
    /// Shapes to draw, comma separated (disk, ring, bar, blob). Default: all four in rotation.
    #[arg(long, value_delimiter = ',', value_parser = parse_shape)]
    pub kinds: Vec<ShapeKind>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// TCP port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Sample catalogue manifest. Default: the built-in synthetic set of 50 shapes at 96 px.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Seconds of inactivity after which a session is dropped.
    #[arg(long, default_value_t = 600)]
    pub session_ttl: u64,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportOutput {
    /// Long table method,round,metric,value.
    Csv,
    /// Per-round mIoU/mDice series.
    Refinement,
    /// Success-rate series per threshold.
    Success,
    /// Merged report JSON.
    Json,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report JSON files (repeatable).
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// What to produce.
    #[arg(long, value_enum, default_value_t = ReportOutput::Csv)]
    pub format: ReportOutput,
}
