//! `din`: train and evaluate differentiable indirection networks.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use din_core::Error;

use config::QuantizeMode;

#[derive(Parser)]
#[command(name = "din", version, about = "Train and evaluate differentiable indirection networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the training subcommands; each overrides the matching
/// field of `--config`.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target compression ratio.
    #[arg(long)]
    pub compression: Option<f64>,
    /// Absolute size budget in bytes (SDF).
    #[arg(long)]
    pub budget_bytes: Option<u64>,
    /// Primary-to-cascaded side-length ratio.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Store arrays as 8-bit codes after training.
    #[arg(long, value_enum)]
    pub quantize: Option<QuantizeMode>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Output directory for model.din, report.jsonl and CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compress an image (PPM/PGM, PNG with the `png` feature, or a material
    /// manifest).
    TrainImage {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// PSNR of a trained image model against its reference.
    EvalImage {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Also write the decoded image here.
        #[arg(long)]
        decoded: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a filtering texture sampler.
    TrainSampler {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ablation: feed footprint 0 to the network.
        #[arg(long)]
        ignore_footprint: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Per-footprint PSNR of a sampler against the trilinear reference.
    EvalSampler {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        ignore_footprint: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the isotropic GGX distribution.
    TrainGgx {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fit a truncated SDF of an analytic shape.
    TrainSdf {
        /// sphere, torus or box; `--config` may give any shape.
        #[arg(long)]
        shape: Option<String>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// IoU and TSDF-MAE of an SDF model on near-surface test points.
    EvalSdf {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a model file's header.
    Info { model: PathBuf },
    /// Dense inside/outside grid of an SDF model (u32 x3 header, u8 voxels).
    ExportGrid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code and machine-readable kind of an error.
fn classify(e: &Error) -> (u8, &'static str) {
    match e {
        Error::InvalidArgument(_) => (2, "invalid-argument"),
        Error::Config(_) => (2, "config"),
        Error::Precondition(_) => (2, "precondition"),
        Error::InfeasibleLayout(_) => (3, "infeasible-layout"),
        Error::Format { .. } => (4, "format"),
        Error::Io(_) => (4, "io"),
    }
}

fn report_error(kind: &str, message: &str, offset: Option<u64>) {
    let mut obj = serde_json::json!({ "error": { "kind": kind, "message": message } });
    if let Some(o) = offset {
        obj["error"]["offset"] = o.into();
    }
    eprintln!("{obj}");
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::TrainImage { input, train } => run::train_image(input, &train),
        Command::EvalImage {
            model,
            reference,
            decoded,
            out,
        } => run::eval_image(&model, &reference, decoded.as_deref(), out.as_deref()),
        Command::TrainSampler {
            input,
            ignore_footprint,
            train,
        } => run::train_sampler(input, ignore_footprint, &train),
        Command::EvalSampler {
            model,
            reference,
            ignore_footprint,
            out,
        } => run::eval_sampler(&model, &reference, ignore_footprint, out.as_deref()),
        Command::TrainGgx { train } => run::train_ggx(&train),
        Command::TrainSdf { shape, train } => run::train_sdf(shape.as_deref(), &train),
        Command::EvalSdf {
            model,
            shape,
            config,
            seed,
            out,
        } => run::eval_sdf(&model, shape.as_deref(), config.as_deref(), seed, out.as_deref()),
        Command::Info { model } => run::info(&model),
        Command::ExportGrid { model, resolution, out } => run::export_grid(&model, resolution, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim(), None);
            return ExitCode::from(2);
        }
    };
    let threads = din_core::train::worker_threads();
    // Fails only if a pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            let offset = match &e {
                Error::Format { offset, .. } => Some(*offset),
                _ => None,
            };
            report_error(kind, &e.to_string(), offset);
            ExitCode::from(code)
        }
    }
}
