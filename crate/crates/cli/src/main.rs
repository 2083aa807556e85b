//! `unicam`: command-line access to distance statistics, UniCAM maps,
//! knowledge-distillation scores, fixtures and heatmap rendering.

mod commands;
mod error;
mod render;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;
use unicam_core::cam::DEFAULT_EPS;

#[derive(Debug, Parser)]
#[command(
    name = "unicam",
    version,
    about = "Unique-feature saliency maps and distillation diagnostics"
)]
struct Cli {
    /// Worker threads for per-batch and per-sample work. Results do not
    /// depend on this value.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    /// Add the wall-clock time to JSON reports (makes them non-reproducible).
    #[arg(long, global = true)]
    timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Squared distance correlation between the rows of two tensors.
    ///
    /// Both tensors share their leading (sample) axis; the remaining axes
    /// are flattened. Distances are exact (no smoothing). The result is 0
    /// when either side has zero distance variance.
    Dcor(DcorArgs),
    /// Squared partial distance correlation of X and Y controlling for Z,
    /// from U-centred distance matrices. Needs at least 4 samples; the value
    /// lies in [-1, 1].
    Pdcor(PdcorArgs),
    /// UniCAM maps: Grad-CAM weighted by how much each channel carries
    /// information the other model lacks.
    ///
    /// `distilled` maps what the student knows beyond the base model;
    /// `residual` swaps the roles. Entries of the two manifests are paired
    /// in order and must have equal batch sizes (at least 4).
    Unicam(UnicamArgs),
    /// Plain Grad-CAM maps: channel weights are the spatial means of the
    /// class-score gradients.
    Gradcam(GradcamArgs),
    /// Feature Similarity Score: per-batch squared distance correlation
    /// between student and base features, averaged over batches.
    Fss(FssArgs),
    /// Relevance Score: per-batch squared distance correlation between
    /// features and the embeddings of the batch's labels.
    Rs(RsArgs),
    /// Masks images [n, c, h, w] with normalized heatmaps [n, h, w].
    Perturb(PerturbArgs),
    /// Synthetic student/base fixtures.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// Writes each map of a [n, h, w] tensor as an 8-bit PGM image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct DcorArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Also report the unsquared statistic.
    #[arg(long)]
    sqrt: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PdcorArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    z: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Distilled,
    Residual,
}

#[derive(Debug, Args)]
struct MapOutput {
    /// Where to write the maps as one [total_samples, h, w] NPY tensor.
    #[arg(long)]
    out: PathBuf,
    /// Directory for one PGM per sample (normalized maps).
    #[arg(long)]
    render: Option<PathBuf>,
    /// Resize to HEIGHT WIDTH and min-max normalize before writing.
    #[arg(long, num_args = 2, value_names = ["HEIGHT", "WIDTH"])]
    resize: Option<Vec<usize>>,
    /// JSON report path; defaults to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UnicamArgs {
    /// Manifest of the student model's activations and gradients.
    #[arg(long)]
    student: PathBuf,
    /// Manifest of the base model's activations (and gradients for
    /// residual maps).
    #[arg(long)]
    base: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Distilled)]
    mode: ModeArg,
    /// Smoothing added under the square root of the distances.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(flatten)]
    output: MapOutput,
}

#[derive(Debug, Args)]
struct GradcamArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    output: MapOutput,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureSourceArg {
    /// Layer activations as exported.
    Activations,
    /// Features of heatmap-masked images computed upstream.
    Perturbed,
}

impl FeatureSourceArg {
    fn label(self) -> &'static str {
        match self {
            FeatureSourceArg::Activations => "activations",
            FeatureSourceArg::Perturbed => "perturbed",
        }
    }
}

#[derive(Debug, Args)]
struct FssArgs {
    /// Manifest whose `acts` hold the student's features per batch.
    #[arg(long)]
    student: PathBuf,
    #[arg(long)]
    base: PathBuf,
    /// What the feature files contain; recorded in the report.
    #[arg(long, value_enum, default_value_t = FeatureSourceArg::Activations)]
    feature_source: FeatureSourceArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RsArgs {
    /// Manifest whose entries carry features (`acts`) and `labels`.
    #[arg(long)]
    features: PathBuf,
    /// Embedding table [num_classes, dim].
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureSourceArg::Activations)]
    feature_source: FeatureSourceArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    images: PathBuf,
    /// Normalized heatmaps: each map's maximum must be 0 or 1.
    #[arg(long)]
    heatmaps: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum FixturesCommand {
    /// Writes fixture tensors, student/base manifests, the embedding table
    /// and the measured scenario margins.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per batch (at least 8).
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Number of batches; batch b uses seed + b.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    batches: u32,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Maps [n, h, w].
    #[arg(long)]
    maps: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Min-max normalize each map first instead of requiring [0, 1] input.
    #[arg(long)]
    normalize: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads as usize)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker threads: {e}")))?;
    let ctx = commands::Context {
        timestamp: cli.timestamp,
    };
    pool.install(|| match cli.command {
        Command::Dcor(a) => commands::dcor(&ctx, &a.x, &a.y, a.sqrt, a.out.as_deref()),
        Command::Pdcor(a) => commands::pdcor(&ctx, &a.x, &a.y, &a.z, a.out.as_deref()),
        Command::Unicam(a) => {
            let mode = match a.mode {
                ModeArg::Distilled => unicam_core::cam::Mode::Distilled,
                ModeArg::Residual => unicam_core::cam::Mode::Residual,
            };
            commands::unicam(&ctx, &a.student, &a.base, mode, a.eps, &a.output.into())
        }
        Command::Gradcam(a) => commands::gradcam(&ctx, &a.manifest, &a.output.into()),
        Command::Fss(a) => commands::fss(&ctx, &a.student, &a.base, a.feature_source.label(), a.out.as_deref()),
        Command::Rs(a) => commands::rs(&ctx, &a.features, &a.table, a.feature_source.label(), a.out.as_deref()),
        Command::Perturb(a) => commands::perturb(&a.images, &a.heatmaps, &a.out),
        Command::Fixtures(FixturesCommand::Generate(a)) => {
            commands::fixtures(a.seed, a.n, a.batches as usize, a.eps, &a.out)
        }
        Command::Render(a) => commands::render(&a.maps, &a.out, a.normalize),
    })
}

impl From<MapOutput> for commands::MapOptions {
    fn from(o: MapOutput) -> Self {
        commands::MapOptions {
            out: o.out,
            render: o.render,
            resize: o.resize.map(|v| (v[0], v[1])),
            report: o.report,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
