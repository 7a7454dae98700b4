mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polynet_core::net::LrSchedule;
use polynet_core::polyfilter::{ConvVariant, Degree};
use polynet_core::polyshape::{Scheme, DEFAULT_COARSE_TARGET, DEFAULT_LEVELS};
use polynet_core::tasks::{EnsembleHead, Split, DEFAULT_NODES};
use std::path::PathBuf;

/// Version tag carried by every `--json` document.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "polynet", version, about = "Polynomial-PDF convolutions on mesh pyramids and graphs")]
struct Cli {
    /// Worker threads; 1 gives fully reproducible runs. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a machine-readable JSON document instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic sphere/box/cylinder mesh dataset.
    GenerateToy(GenerateToyArgs),
    /// Write superpixel graphs built from the bundled digit images.
    GenerateDigits(GenerateDigitsArgs),
    /// Clean, normalize and build a mesh pyramid for every input mesh.
    Process(ProcessArgs),
    /// Train a network on a processed dataset.
    Train(TrainArgs),
    /// Classification accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Accuracy of the averaged-feature ensemble of a PTQ and a sqrt3 model.
    Ensemble(EnsembleArgs),
    /// Retrieval mAP using softmax descriptors and L1 distance.
    Retrieve(RetrieveArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "sphere,box,cylinder")]
    classes: Vec<String>,
    /// Training meshes per class.
    #[arg(long, default_value_t = 20)]
    train: usize,
    /// Test meshes per class.
    #[arg(long, default_value_t = 10)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenerateDigitsArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    train: usize,
    #[arg(long, default_value_t = 200)]
    test: usize,
    #[arg(long, default_value_t = DEFAULT_NODES)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Ptq,
    Sqrt3,
    Both,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::Ptq => vec![Scheme::Ptq],
            SchemeArg::Sqrt3 => vec![Scheme::Sqrt3],
            SchemeArg::Both => vec![Scheme::Ptq, Scheme::Sqrt3],
        }
    }
}

#[derive(Args)]
struct ProcessArgs {
    /// Dataset root laid out as `class/{train,test}/*.off|*.obj`.
    input: PathBuf,
    /// Output directory; `--scheme both` writes `ptq/` and `sqrt3/` inside it.
    output: PathBuf,
    #[arg(long, value_enum, default_value = "sqrt3")]
    scheme: SchemeArg,
    /// Subdivision levels above the coarse mesh.
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    /// Vertex target for decimation.
    #[arg(long, default_value_t = DEFAULT_COARSE_TARGET)]
    coarse: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Squeezed,
    Unsqueezed,
}

impl From<VariantArg> for ConvVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Squeezed => ConvVariant::Squeezed,
            VariantArg::Unsqueezed => ConvVariant::Unsqueezed,
        }
    }
}

fn parse_degree(s: &str) -> Result<Degree, String> {
    let d: usize = s.parse().map_err(|e| format!("{e}"))?;
    Degree::new(d).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Processed dataset directory.
    data: PathBuf,
    /// Checkpoint with the best validation accuracy.
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint after the last epoch.
    #[arg(long)]
    final_out: Option<PathBuf>,
    /// TOML or JSON overrides on top of the mesh or graph defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-epoch metrics as JSON lines.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Split scored after each epoch; `none` disables validation.
    #[arg(long, value_enum, default_value = "test")]
    val: ValArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_parser = parse_degree)]
    degree: Option<Degree>,
    #[arg(long, value_delimiter = ',')]
    conv_widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fc_widths: Option<Vec<usize>>,
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    Cosine,
}

impl From<ScheduleArg> for LrSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Constant => LrSchedule::Constant,
            ScheduleArg::Cosine => LrSchedule::Cosine,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ValArg {
    Test,
    None,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Write `sample_id,label,pred,logit_*` rows here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Sqrt3,
    Ptq,
}

impl From<HeadArg> for EnsembleHead {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Sqrt3 => EnsembleHead::Sqrt3,
            HeadArg::Ptq => EnsembleHead::Ptq,
        }
    }
}

#[derive(Args)]
struct EnsembleArgs {
    ptq_checkpoint: PathBuf,
    sqrt3_checkpoint: PathBuf,
    ptq_data: PathBuf,
    sqrt3_data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Which model's FC head scores the averaged features.
    #[arg(long, value_enum, default_value = "sqrt3")]
    head: HeadArg,
}

#[derive(Args)]
struct RetrieveArgs {
    checkpoint: PathBuf,
    data: PathBuf,
    /// Split used as queries.
    #[arg(long, value_enum, default_value = "test")]
    queries: SplitArg,
    /// Split searched for each query.
    #[arg(long, value_enum, default_value = "train")]
    gallery: SplitArg,
    /// Ranked gallery entries to report per query in `--json`.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "squeezed")]
    variant: VariantArg,
    #[arg(long, value_parser = parse_degree, default_value = "2")]
    degree: Degree,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Conv layer instances to check.
    #[arg(long, default_value_t = 20)]
    instances: u64,
    /// Also check a small full network.
    #[arg(long)]
    network: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLYNET_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command, cli.json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
