//! Truncated signed distance fields of analytic shapes: a 3-D primary
//! feeding a 3-D scalar cascaded array, trained on near-surface samples whose
//! distances are quantized to `±1`.

mod kdtree;
mod shape;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridArray, Nonlinearity};
use crate::net::{solve_layout_sdf, DInNetwork};
use crate::optim::{Loss, Scheduler, TrainConfig};
use crate::train::{Batch, Trained, Trainer};

pub use kdtree::{nearest_brute_force, KdTree};
pub use shape::{sdf_reference, Shape};

/// Quantized target: `+1` outside or on the surface, `-1` inside.
#[inline]
pub fn truncate(d: f64) -> f32 {
    if d >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub near: usize,
    pub uniform: usize,
}

impl SampleCounts {
    /// `near` surface samples and one uniform sample per 50 of them.
    pub fn with_near(near: usize) -> Self {
        Self {
            near,
            uniform: near / 50,
        }
    }
}

/// Training points: near-surface samples first, then uniform ones.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfSampleSet {
    pub positions: Vec<[f32; 3]>,
    /// Exact signed distances.
    pub distances: Vec<f32>,
    pub near_count: usize,
}

impl SdfSampleSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn uniform_count(&self) -> usize {
        self.len() - self.near_count
    }

    pub fn target(&self, i: usize) -> f32 {
        truncate(self.distances[i] as f64)
    }
}

/// Surface point pushed along its normal by `N(0, sigma)`, clamped to the
/// unit cube.
pub fn sample_near_surface(shape: &Shape, sigma: f64, rng: &mut impl Rng) -> Result<[f64; 3]> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::arg(format!("sigma {sigma}: {e}")))?;
    let (p, n) = shape.sample_surface(rng);
    let t: f64 = normal.sample(rng);
    Ok(std::array::from_fn(|i| (p[i] + t * n[i]).clamp(0.0, 1.0)))
}

pub fn sample_sdf_training_set(
    shape: &Shape,
    counts: SampleCounts,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<SdfSampleSet> {
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    let total = counts.near + counts.uniform;
    let mut positions = Vec::with_capacity(total);
    let mut distances = Vec::with_capacity(total);
    for i in 0..total {
        let p = if i < counts.near {
            sample_near_surface(shape, sigma, rng)?
        } else {
            std::array::from_fn(|_| rng.random::<f64>())
        };
        positions.push(p.map(|v| v as f32));
        distances.push(shape.distance(p) as f32);
    }
    Ok(SdfSampleSet {
        positions,
        distances,
        near_count: counts.near,
    })
}

/// Near-surface evaluation points drawn like the training set's.
pub fn sample_sdf_test_points(shape: &Shape, count: usize, sigma: f64, rng: &mut impl Rng) -> Result<Vec<[f64; 3]>> {
    (0..count).map(|_| sample_near_surface(shape, sigma, rng)).collect()
}

/// What a cascaded voxel is initialized from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SdfTarget {
    /// Distances quantized to `±1`.
    #[default]
    Truncated,
    /// Raw signed distances.
    Raw,
}

impl SdfTarget {
    fn value(self, samples: &SdfSampleSet, i: usize) -> f32 {
        match self {
            SdfTarget::Truncated => samples.target(i),
            SdfTarget::Raw => samples.distances[i],
        }
    }
}

/// Sets every cascaded vertex to the target of its nearest sample.
pub fn init_cascaded_from_samples(cascaded: &mut GridArray<f32>, samples: &SdfSampleSet, target: SdfTarget) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::arg("no samples to initialize from"));
    }
    check_cascaded(cascaded)?;
    let tree = KdTree::build(&samples.positions);
    let values: Vec<f32> = (0..cascaded.vertex_count())
        .into_par_iter()
        .map(|v| {
            let p = cascaded.vertex_position(v);
            let i = tree.nearest([p[0], p[1], p[2]]).expect("non-empty");
            target.value(samples, i)
        })
        .collect();
    cascaded.cells_mut().copy_from_slice(&values);
    Ok(())
}

/// Linear-scan version of [`init_cascaded_from_samples`].
pub fn init_cascaded_brute_force(cascaded: &mut GridArray<f32>, samples: &SdfSampleSet, target: SdfTarget) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::arg("no samples to initialize from"));
    }
    check_cascaded(cascaded)?;
    for v in 0..cascaded.vertex_count() {
        let p = cascaded.vertex_position(v);
        let i = nearest_brute_force(&samples.positions, [p[0], p[1], p[2]]).expect("non-empty");
        cascaded.cells_mut()[v] = target.value(samples, i);
    }
    Ok(())
}

fn check_cascaded(cascaded: &GridArray<f32>) -> Result<()> {
    if cascaded.dims() != 3 || cascaded.channels() != 1 {
        return Err(Error::arg("SDF cascaded arrays are 3-D and scalar"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdfTaskConfig {
    pub budget_bytes: u64,
    pub rho: f64,
    pub near_samples: usize,
    pub sigma: f64,
    pub target: SdfTarget,
    /// Loss; relative errors pair with raw distances.
    pub loss: Loss,
    /// Initialize the cascaded array from nearest samples instead of 0.
    pub pre_initialize: bool,
    /// Passes over the sample set, used when `train.steps` is unset.
    pub epochs: usize,
    pub train: TrainConfig,
}

impl Default for SdfTaskConfig {
    fn default() -> Self {
        Self {
            budget_bytes: 3 * 64 * 64 * 64 + 32 * 32 * 32,
            rho: 2.0,
            near_samples: 2_000_000,
            sigma: 0.01,
            target: SdfTarget::Truncated,
            loss: Loss::Mae,
            pre_initialize: true,
            epochs: 30,
            train: TrainConfig {
                batch_size: 2048,
                scheduler: Scheduler::StepDecay { factor: 0.5, every: 6000 },
                ..Default::default()
            },
        }
    }
}

pub fn initial_sdf_network(
    primary_resolution: usize,
    cascaded_resolution: usize,
    samples: Option<(&SdfSampleSet, SdfTarget)>,
) -> Result<DInNetwork<f32>> {
    let mut p = GridArray::new(&[primary_resolution; 3], 3, Nonlinearity::Triangle)?;
    p.init_identity_ramp();
    let mut c = GridArray::new(&[cascaded_resolution; 3], 1, Nonlinearity::None)?;
    if let Some((s, target)) = samples {
        init_cascaded_from_samples(&mut c, s, target)?;
    }
    DInNetwork::concatenated(vec![p], c)
}

pub fn train_sdf(shape: &Shape, config: &SdfTaskConfig) -> Result<Trained> {
    train_sdf_observed(shape, config, &mut |_, _| {})
}

pub fn train_sdf_observed(shape: &Shape, config: &SdfTaskConfig, observe: &mut dyn FnMut(usize, f64)) -> Result<Trained> {
    let layout = solve_layout_sdf(config.budget_bytes, config.rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let samples = sample_sdf_training_set(shape, SampleCounts::with_near(config.near_samples), config.sigma, &mut rng)?;
    let net = initial_sdf_network(
        layout.primary_resolution,
        layout.cascaded_resolution,
        config.pre_initialize.then_some((&samples, config.target)),
    )?;
    let steps = config.train.steps_or(config.epochs * samples.len().div_ceil(config.train.batch_size));
    let mut trainer = Trainer::new(net, config.train.clone(), config.loss)?;
    let mut batch = Batch::for_network(trainer.network());
    let mut order: Vec<u32> = Vec::new();
    let mut cursor = 0;
    let mut loss = f64::NAN;
    for step in 0..steps {
        batch.clear();
        while batch.len() < config.train.batch_size {
            if cursor == order.len() {
                order = (0..samples.len() as u32).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor] as usize;
            cursor += 1;
            batch.push(&[&samples.positions[i]], &[config.target.value(&samples, i)]);
        }
        loss = trainer.step(&batch)?;
        observe(step, loss);
    }
    Ok(Trained {
        network: trainer.into_network(),
        layout: Some(layout),
        final_loss: loss,
        steps,
    })
}

/// Intersection over union of two occupancy labelings; `None` when neither
/// marks anything inside.
pub fn iou(a: &[bool], b: &[bool]) -> Option<f64> {
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let either = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    (either > 0).then(|| both as f64 / either as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdfMetrics {
    pub iou: Option<f64>,
    /// Mean absolute error against the `±1` targets.
    pub tsdf_mae: f64,
}

pub fn sdf_predictions(net: &DInNetwork<f32>, points: &[[f64; 3]]) -> Result<Vec<f32>> {
    if net.primaries().len() != 1 || net.primaries()[0].dims() != 3 || net.output_channels() != 1 {
        return Err(Error::config("not an SDF network"));
    }
    Ok(points
        .par_iter()
        .map_init(
            || net.workspace(),
            |ws, p| net.forward_with(&[&p.map(|v| v as f32)], ws)[0],
        )
        .collect())
}

pub fn eval_sdf(net: &DInNetwork<f32>, shape: &Shape, points: &[[f64; 3]]) -> Result<SdfMetrics> {
    if points.is_empty() {
        return Err(Error::arg("no test points"));
    }
    let pred = sdf_predictions(net, points)?;
    let mut mae = 0.0;
    let mut pred_in = Vec::with_capacity(points.len());
    let mut ref_in = Vec::with_capacity(points.len());
    for (p, &y) in points.iter().zip(&pred) {
        let t = truncate(shape.distance(*p));
        mae += (y - t).abs() as f64;
        pred_in.push(y < 0.0);
        ref_in.push(t < 0.0);
    }
    Ok(SdfMetrics {
        iou: iou(&pred_in, &ref_in),
        tsdf_mae: mae / points.len() as f64,
    })
}

/// Dense inside/outside grid: a little-endian `u32` resolution per axis,
/// then one byte per voxel (1 inside, 0 outside), x fastest. Voxel `i` sits at
/// `i / (r - 1)` like array vertices.
pub fn export_sign_grid(net: &DInNetwork<f32>, resolution: [u32; 3]) -> Result<Vec<u8>> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::arg("sign grids need at least 2 voxels per axis"));
    }
    let [rx, ry, rz] = resolution.map(|r| r as usize);
    let pos = |i: usize, r: usize| i as f64 / (r - 1) as f64;
    let points: Vec<[f64; 3]> = (0..rz)
        .flat_map(|z| (0..ry).flat_map(move |y| (0..rx).map(move |x| [pos(x, rx), pos(y, ry), pos(z, rz)])))
        .collect();
    let mut out = Vec::with_capacity(12 + points.len());
    for r in resolution {
        out.extend_from_slice(&r.to_le_bytes());
    }
    out.extend(sdf_predictions(net, &points)?.iter().map(|&v| u8::from(v < 0.0)));
    Ok(out)
}
