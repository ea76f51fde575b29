//! Subcommand implementations: layout -> init -> train -> quantize ->
//! evaluate -> save model and report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use din_core::ggx::{self, GgxTaskConfig};
use din_core::image::{self, ImageBuffer, ImageTaskConfig};
use din_core::net::{self, DInNetwork, QuantizeTargets};
use din_core::optim::TrainConfig;
use din_core::sampler::{self, SamplerTaskConfig};
use din_core::sdf::{self, SdfTaskConfig, Shape};
use din_core::train::Trained;
use din_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{QuantizeMode, RunConfig, TaskId};
use crate::report::{metric, sha256_hex, MetricsReport, Resolutions};
use crate::TrainArgs;

/// Held-out evaluation set sizes.
const GGX_TEST_SAMPLES: usize = 100_000;
const SDF_TEST_POINTS: usize = 100_000;

/// Config file (if any) with command-line flags applied on top.
fn resolve(args: &TrainArgs, task: TaskId) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.expect_task(task)?;
    cfg.task = Some(task);
    if args.compression.is_some() {
        cfg.compression = args.compression;
    }
    if args.budget_bytes.is_some() {
        cfg.budget_bytes = args.budget_bytes;
    }
    if args.rho.is_some() {
        cfg.rho = args.rho;
    }
    if let Some(q) = args.quantize {
        cfg.quantize = q;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    Ok(cfg)
}

fn train_config(cfg: &RunConfig, args: &TrainArgs, defaults: TrainConfig) -> Result<TrainConfig, Error> {
    let mut t = cfg.train_config(defaults)?;
    if args.steps.is_some() {
        t.steps = args.steps;
    }
    if let Some(lr) = args.lr {
        t.learning_rate = lr;
    }
    t.validate()?;
    Ok(t)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("an output directory is required (--out)".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Image file or material manifest, with initial cascaded values per channel.
fn load_input(path: &Path) -> Result<(ImageBuffer, Option<Vec<f32>>), Error> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let (img, init) = image::load_manifest(path)?;
        Ok((img, Some(init)))
    } else {
        Ok((image::read_image(path)?, None))
    }
}

fn require_input(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, Error> {
    flag.or_else(|| cfg.input.clone())
        .ok_or_else(|| Error::Config("an input image is required (--input)".into()))
}

fn maybe_quantize(net: DInNetwork<f32>, mode: QuantizeMode) -> DInNetwork<f32> {
    match mode {
        QuantizeMode::None => net,
        QuantizeMode::U8 => net.quantize8(QuantizeTargets::ALL),
    }
}

/// Writes `model.din`, returning its checksum.
fn save_model(dir: &Path, net: &DInNetwork<f32>) -> Result<String, Error> {
    let bytes = net::write_model(net);
    std::fs::write(dir.join("model.din"), &bytes)?;
    Ok(sha256_hex(&bytes))
}

fn load_model(path: &Path) -> Result<(DInNetwork<f32>, String), Error> {
    let bytes = std::fs::read(path)?;
    let net = net::read_model(&bytes)?;
    Ok((net, sha256_hex(&bytes)))
}

struct Finished {
    task: TaskId,
    command: &'static str,
    trained: Option<Trained>,
    net: DInNetwork<f32>,
    seed: Option<u64>,
    metrics: BTreeMap<String, serde_json::Value>,
    started: Instant,
    sha: String,
}

impl Finished {
    fn emit(self, out: Option<&Path>) -> Result<(), Error> {
        let task = serde_json::to_value(self.task).expect("serializable");
        MetricsReport {
            task: task.as_str().unwrap_or_default().to_string(),
            command: self.command.to_string(),
            layout: self.trained.as_ref().and_then(|t| t.layout.clone()),
            resolutions: Resolutions::of(&self.net),
            model_bytes: self.net.byte_size(),
            quantized: self.net.arrays().iter().any(|a| a.is_quantized()),
            seed: self.seed,
            steps: self.trained.as_ref().map(|t| t.steps),
            metrics: self.metrics,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            model_sha256: self.sha,
        }
        .emit(out)
    }
}

fn image_metrics(net: &DInNetwork<f32>, reference: &ImageBuffer) -> Result<BTreeMap<String, serde_json::Value>, Error> {
    let decoded = image::decode_image(net, reference.width(), reference.height())?;
    let mut m = BTreeMap::new();
    m.insert("psnr".into(), metric(image::psnr(reference, &decoded)?));
    Ok(m)
}

pub fn train_image(input: Option<PathBuf>, args: &TrainArgs) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = resolve(args, TaskId::Image)?;
    let dir = out_dir(&cfg)?;
    let (img, init) = load_input(&require_input(&cfg, input)?)?;
    let defaults = ImageTaskConfig::default();
    let task = ImageTaskConfig {
        compression: cfg.compression.unwrap_or(defaults.compression),
        rho: cfg.rho,
        cascaded_dims: cfg.cascaded_dims.unwrap_or(defaults.cascaded_dims),
        init_values: init,
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        train: train_config(&cfg, args, defaults.train)?,
    };
    let trained = image::train_image(&img, &task)?;
    let net = maybe_quantize(trained.network.clone(), cfg.quantize);
    let mut metrics = image_metrics(&net, &img)?;
    let baseline = image::downsample_baseline(&img, task.compression)?;
    metrics.insert("psnr_baseline".into(), metric(image::psnr(&img, &baseline)?));
    let sha = save_model(&dir, &net)?;
    Finished {
        task: TaskId::Image,
        command: "train-image",
        trained: Some(trained),
        net,
        seed: Some(task.train.seed),
        metrics,
        started,
        sha,
    }
    .emit(Some(&dir))
}

pub fn eval_image(model: &Path, reference: &Path, decoded: Option<&Path>, out: Option<&Path>) -> Result<(), Error> {
    let started = Instant::now();
    let (net, sha) = load_model(model)?;
    let (img, _) = load_input(reference)?;
    let metrics = image_metrics(&net, &img)?;
    if let Some(path) = decoded {
        image::write_image(&image::decode_image(&net, img.width(), img.height())?, path)?;
    }
    Finished {
        task: TaskId::Image,
        command: "eval-image",
        trained: None,
        net,
        seed: None,
        metrics,
        started,
        sha,
    }
    .emit(out)
}

fn sampler_metrics(
    net: &DInNetwork<f32>,
    img: &ImageBuffer,
    ignore_footprint: bool,
    csv: Option<&Path>,
) -> Result<BTreeMap<String, serde_json::Value>, Error> {
    let chain = sampler::build_mip_chain(img)?;
    let rows = sampler::evaluate_sampler(
        net,
        &chain,
        &sampler::evaluation_footprints(chain.base_resolution()),
        ignore_footprint,
    )?;
    if let Some(path) = csv {
        std::fs::write(path, sampler::footprint_psnr_csv(&rows))?;
    }
    Ok(rows
        .iter()
        .map(|r| (format!("psnr@{}", r.footprint), metric(r.psnr)))
        .collect())
}

pub fn train_sampler(input: Option<PathBuf>, ignore_footprint: bool, args: &TrainArgs) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = resolve(args, TaskId::Sampler)?;
    let dir = out_dir(&cfg)?;
    let (img, _) = load_input(&require_input(&cfg, input)?)?;
    let defaults = SamplerTaskConfig::default();
    let ignore = ignore_footprint || cfg.ignore_footprint.unwrap_or(false);
    let task = SamplerTaskConfig {
        compression: cfg.compression.unwrap_or(defaults.compression),
        rho: cfg.rho,
        footprint: cfg.footprint.unwrap_or(defaults.footprint),
        ignore_footprint: ignore,
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        train: train_config(&cfg, args, defaults.train)?,
    };
    let trained = sampler::train_sampler(&img, &task)?;
    let net = maybe_quantize(trained.network.clone(), cfg.quantize);
    let metrics = sampler_metrics(&net, &img, ignore, Some(&dir.join("footprints.csv")))?;
    let sha = save_model(&dir, &net)?;
    Finished {
        task: TaskId::Sampler,
        command: "train-sampler",
        trained: Some(trained),
        net,
        seed: Some(task.train.seed),
        metrics,
        started,
        sha,
    }
    .emit(Some(&dir))
}

pub fn eval_sampler(model: &Path, reference: &Path, ignore_footprint: bool, out: Option<&Path>) -> Result<(), Error> {
    let started = Instant::now();
    let (net, sha) = load_model(model)?;
    let (img, _) = load_input(reference)?;
    let csv = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(dir.join("footprints.csv"))
        }
        None => None,
    };
    let metrics = sampler_metrics(&net, &img, ignore_footprint, csv.as_deref())?;
    Finished {
        task: TaskId::Sampler,
        command: "eval-sampler",
        trained: None,
        net,
        seed: None,
        metrics,
        started,
        sha,
    }
    .emit(out)
}

/// Evaluation draws come from a separate stream of the run's seed.
fn eval_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn train_ggx(args: &TrainArgs) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = resolve(args, TaskId::Ggx)?;
    let dir = out_dir(&cfg)?;
    let defaults = GgxTaskConfig::default();
    let task = GgxTaskConfig {
        train: train_config(&cfg, args, defaults.train.clone())?,
        ..defaults
    };
    let trained = ggx::train_ggx(&task)?;
    let net = maybe_quantize(trained.network.clone(), cfg.quantize);
    let test = ggx::sample_ggx_inputs(&mut eval_rng(task.train.seed), GGX_TEST_SAMPLES);
    let mut metrics = BTreeMap::new();
    metrics.insert("psnr_normalized".into(), metric(ggx::evaluate_ggx(&net, &test)?));
    std::fs::write(dir.join("ggx_grid.csv"), ggx::ggx_grid_csv(&net, 64, 64)?)?;
    let sha = save_model(&dir, &net)?;
    Finished {
        task: TaskId::Ggx,
        command: "train-ggx",
        trained: Some(trained),
        net,
        seed: Some(task.train.seed),
        metrics,
        started,
        sha,
    }
    .emit(Some(&dir))
}

pub fn shape_by_name(name: &str) -> Result<Shape, Error> {
    match name {
        "sphere" => Ok(Shape::unit_sphere()),
        "torus" => Ok(Shape::unit_torus()),
        "box" => Ok(Shape::Box {
            center: [0.5; 3],
            half_extents: [0.2; 3],
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown shape {other:?} (expected sphere, torus or box)"
        ))),
    }
}

fn sdf_metrics(
    net: &DInNetwork<f32>,
    shape: &Shape,
    seed: u64,
    sigma: f64,
    csv: Option<&Path>,
) -> Result<BTreeMap<String, serde_json::Value>, Error> {
    let points = sdf::sample_sdf_test_points(shape, SDF_TEST_POINTS, sigma, &mut eval_rng(seed))?;
    let m = sdf::eval_sdf(net, shape, &points)?;
    if let Some(path) = csv {
        let iou = m.iou.map_or("undefined".to_string(), |v| v.to_string());
        std::fs::write(path, format!("iou,tsdf_mae\n{iou},{}\n", m.tsdf_mae))?;
    }
    let mut out = BTreeMap::new();
    out.insert("iou".into(), m.iou.map_or(serde_json::Value::Null, metric));
    out.insert("tsdf_mae".into(), metric(m.tsdf_mae));
    Ok(out)
}

fn resolve_shape(name: Option<&str>, cfg: &RunConfig) -> Result<Shape, Error> {
    match name {
        Some(n) => shape_by_name(n),
        None => Ok(cfg.shape.unwrap_or_else(Shape::unit_sphere)),
    }
}

pub fn train_sdf(shape: Option<&str>, args: &TrainArgs) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = resolve(args, TaskId::Sdf)?;
    let dir = out_dir(&cfg)?;
    let shape = resolve_shape(shape, &cfg)?;
    let defaults = SdfTaskConfig::default();
    let task = SdfTaskConfig {
        budget_bytes: cfg.budget_bytes.unwrap_or(defaults.budget_bytes),
        rho: cfg.rho.unwrap_or(defaults.rho),
        near_samples: cfg.near_samples.unwrap_or(defaults.near_samples),
        target: cfg.sdf_target.unwrap_or(defaults.target),
        loss: cfg.loss.unwrap_or(defaults.loss),
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        train: train_config(&cfg, args, defaults.train.clone())?,
        ..defaults
    };
    let trained = sdf::train_sdf(&shape, &task)?;
    let net = maybe_quantize(trained.network.clone(), cfg.quantize);
    let metrics = sdf_metrics(&net, &shape, task.train.seed, task.sigma, Some(&dir.join("sdf_eval.csv")))?;
    let sha = save_model(&dir, &net)?;
    Finished {
        task: TaskId::Sdf,
        command: "train-sdf",
        trained: Some(trained),
        net,
        seed: Some(task.train.seed),
        metrics,
        started,
        sha,
    }
    .emit(Some(&dir))
}

pub fn eval_sdf(
    model: &Path,
    shape: Option<&str>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let started = Instant::now();
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.expect_task(TaskId::Sdf)?;
    let shape = resolve_shape(shape, &cfg)?;
    let seed = seed.or(cfg.seed).unwrap_or_default();
    let (net, sha) = load_model(model)?;
    let csv = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(dir.join("sdf_eval.csv"))
        }
        None => None,
    };
    let metrics = sdf_metrics(&net, &shape, seed, SdfTaskConfig::default().sigma, csv.as_deref())?;
    Finished {
        task: TaskId::Sdf,
        command: "eval-sdf",
        trained: None,
        net,
        seed: Some(seed),
        metrics,
        started,
        sha,
    }
    .emit(out)
}

pub fn info(model: &Path) -> Result<(), Error> {
    let bytes = std::fs::read(model)?;
    let net = net::read_model(&bytes)?;
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("header already validated"));
    let describe = |role: &str, a: &din_core::GridArray<f32>| {
        serde_json::json!({
            "role": role,
            "dims": a.dims(),
            "resolution": a.shape(),
            "channels": a.channels(),
            "nonlinearity": format!("{:?}", a.nonlinearity()).to_lowercase(),
            "quantized": a.is_quantized(),
        })
    };
    let mut arrays: Vec<_> = net.primaries().iter().map(|p| describe("primary", p)).collect();
    arrays.push(describe("cascaded", net.cascaded()));
    let wiring: Vec<_> = net.wiring().iter().map(|w| [w.primary, w.channel]).collect();
    let obj = serde_json::json!({
        "magic": String::from_utf8_lossy(net::MAGIC),
        "version": version,
        "array_count": arrays.len(),
        "arrays": arrays,
        "wiring": wiring,
        "model_bytes": net.byte_size(),
        "file_bytes": bytes.len(),
        "sha256": sha256_hex(&bytes),
    });
    println!("{obj}");
    Ok(())
}

pub fn export_grid(model: &Path, resolution: u32, out: &Path) -> Result<(), Error> {
    let (net, _) = load_model(model)?;
    let grid = sdf::export_sign_grid(&net, [resolution; 3])?;
    std::fs::write(out, grid)?;
    Ok(())
}
