//! `hgdet`: command-line access to the backbone builders, decoding, crop
//! scheduling, synthetic scenes, benchmarks and backbone comparison.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hgdet", version, about = "Corner-keypoint detector backbones, decoding and crop scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, inspect and run backbone graphs.
    #[command(subcommand)]
    Arch(ArchCmd),
    /// Peak extraction and corner grouping on SKT1 maps.
    #[command(subcommand)]
    Decode(DecodeCmd),
    /// Attention-guided crop scheduling.
    #[command(subcommand)]
    Saccade(SaccadeCmd),
    /// Synthetic scenes and analytically rendered outputs.
    #[command(subcommand)]
    Scene(SceneCmd),
    /// Time kernels and forward passes.
    Bench(BenchArgs),
    /// Parameter, MAC, memory and depth table for several backbones.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
pub struct GraphArgs {
    /// Built-in variant: hourglass54, squeeze or hg104-ref.
    #[arg(long, default_value = "squeeze", conflicts_with = "config")]
    pub variant: String,
    /// Full backbone config as JSON (see `arch config`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 80)]
    pub classes: usize,
    /// Input dims as NxCxHxW.
    #[arg(long)]
    pub input: Option<String>,
    /// Divide every channel width by this factor.
    #[arg(long)]
    pub narrow: Option<usize>,
}

#[derive(Args, Clone)]
pub struct WeightArgs {
    /// Directory written by `arch init-weights`; random weights are drawn from `--seed` otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitKind {
    Uniform,
    Zeros,
}

#[derive(Subcommand)]
enum ArchCmd {
    /// Print the full config of a variant.
    Config {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the layer graph as JSON.
    Build {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Census, cost and depth reports.
    Stats {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 4)]
        bytes_per_element: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write seeded parameters as one SKT1 file per tensor.
    InitWeights {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, value_enum, default_value = "uniform")]
        init: InitKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the graph and write every tap as `<tap>.skt`.
    Forward {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        weights: WeightArgs,
        /// SKT1 input; a seeded random image is used otherwise.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DecodeCmd {
    /// Top-k local maxima of a heatmap.
    Peaks {
        #[arg(long)]
        heat: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Pair corners into boxes from a directory holding tl_/br_ heat, embed and offset maps.
    Group {
        #[arg(long)]
        maps: PathBuf,
        /// Input pixels per map pixel.
        #[arg(long, default_value_t = 4.0)]
        factor: f64,
        /// DecodeConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelKind {
    /// Render outputs from ground truth.
    Oracle,
    /// Run a backbone graph.
    Graph,
}

#[derive(Args)]
pub struct SaccadeArgs {
    /// SceneSpec JSON; supplies both image and ground truth.
    #[arg(long, conflicts_with = "image")]
    pub scene: Option<PathBuf>,
    /// SKT1 image of shape 1xCxHxW.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Ground-truth detections JSON for the oracle model.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub model: ModelKind,
    /// Oracle objects with a visible longer side below this get no corners.
    #[arg(long, default_value_t = 0.0)]
    pub min_corner_side: f64,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// SaccadeConfig JSON.
    #[arg(long)]
    pub saccade_config: Option<PathBuf>,
    /// Overrides the config's crop budget.
    #[arg(long)]
    pub max_regions: Option<usize>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SaccadeCmd {
    /// Final detections.
    Run(SaccadeArgs),
    /// Detections plus locations, suppression decisions and crop windows.
    Trace(SaccadeArgs),
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Render a scene to an SKT1 image plus ground-truth JSON.
    Gen {
        /// SceneSpec JSON; a random scene is drawn from the flags below otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 255)]
        height: usize,
        #[arg(long, default_value_t = 255)]
        width: usize,
        #[arg(long, default_value_t = 3)]
        objects: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
        /// Also write the (possibly random) SceneSpec.
        #[arg(long)]
        out_spec: Option<PathBuf>,
    },
    /// Render attention and corner maps for ground truth as tap-named SKT1 files.
    Oracle {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 255)]
        height: usize,
        #[arg(long, default_value_t = 255)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        factor: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// BenchSuite JSON; flags override its fields.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Comma-separated ops: conv3x3, depthwise3x3, transpose_conv, max_pool, forward:<variant>.
    #[arg(long, value_delimiter = ',')]
    ops: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "squeeze,hourglass54,hg104-ref")]
    variants: Vec<String>,
    #[arg(long, default_value_t = 80)]
    classes: usize,
    #[arg(long, default_value = "1x3x255x255")]
    input: String,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    use commands::*;
    match cli.command {
        Command::Arch(cmd) => match cmd {
            ArchCmd::Config { graph, out } => arch::config(&graph, out.as_deref()),
            ArchCmd::Build { graph, out } => arch::build(&graph, out.as_deref()),
            ArchCmd::Stats { graph, bytes_per_element, out } => arch::stats(&graph, bytes_per_element, out.as_deref()),
            ArchCmd::InitWeights { graph, init, seed, out } => arch::init_weights(&graph, init, seed, &out),
            ArchCmd::Forward { graph, weights, image, out } => arch::forward(&graph, &weights, image.as_deref(), &out),
        },
        Command::Decode(cmd) => match cmd {
            DecodeCmd::Peaks { heat, k, out } => decode::peaks(&heat, k, out.as_deref()),
            DecodeCmd::Group { maps, factor, config, out } => {
                decode::group(&maps, factor, config.as_deref(), out.as_deref())
            }
        },
        Command::Saccade(cmd) => match cmd {
            SaccadeCmd::Run(args) => saccade::run(&args, false),
            SaccadeCmd::Trace(args) => saccade::run(&args, true),
        },
        Command::Scene(cmd) => match cmd {
            SceneCmd::Gen { spec, seed, height, width, objects, classes, out_image, out_gt, out_spec } => {
                let random = scene::RandomScene { seed, height, width, objects, classes };
                scene::gen(spec.as_deref(), &random, &out_image, &out_gt, out_spec.as_deref())
            }
            SceneCmd::Oracle { gt, classes, height, width, factor, out } => {
                scene::oracle(&gt, classes, (height, width), factor, &out)
            }
        },
        Command::Bench(a) => {
            let overrides = bench::Overrides {
                ops: a.ops,
                sizes: a.sizes,
                repetitions: a.repetitions,
                channels: a.channels,
                seed: a.seed,
            };
            bench::run(a.suite.as_deref(), overrides, a.out.as_deref())
        }
        Command::Compare(a) => {
            compare::run(&a.variants, a.classes, &a.input, matches!(a.format, Format::Csv), a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
