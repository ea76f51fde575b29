//! Isotropic GGX normal distribution approximated by a 16^2 -> 8^2
//! indirection queried with `(alpha, h_z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridArray, Nonlinearity};
use crate::net::DInNetwork;
use crate::optim::{Loss, Scheduler, TrainConfig};
use crate::train::{Batch, Trained, Trainer};

/// Smallest roughness the sampler produces.
pub const MIN_ALPHA: f64 = 1e-3;

/// `D(h_z, alpha) = alpha^4 / (pi (1 + (alpha^4 - 1) h_z^2)^2)`.
pub fn ggx_reference(h_z: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("roughness must lie in (0, 1], got {alpha}")));
    }
    if !(0.0..=1.0).contains(&h_z) {
        return Err(Error::arg(format!("h_z must lie in [0, 1], got {h_z}")));
    }
    let a4 = alpha.powi(4);
    let denom = 1.0 + (a4 - 1.0) * h_z * h_z;
    Ok(a4 / (std::f64::consts::PI * denom * denom))
}

/// `h_z` cosine-weighted (`sqrt(u)`), roughness `u'^2` floored at
/// [`MIN_ALPHA`], biasing samples towards smooth surfaces.
pub fn sample_ggx_input(rng: &mut impl Rng) -> (f64, f64) {
    let h_z = rng.random::<f64>().sqrt();
    let alpha = rng.random::<f64>().powi(2).clamp(MIN_ALPHA, 1.0);
    (h_z, alpha)
}

pub fn sample_ggx_inputs(rng: &mut impl Rng, count: usize) -> Vec<(f64, f64)> {
    (0..count).map(|_| sample_ggx_input(rng)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GgxTaskConfig {
    pub primary_resolution: usize,
    pub cascaded_resolution: usize,
    /// Steps used when `train.steps` is unset.
    pub default_steps: usize,
    pub train: TrainConfig,
}

impl Default for GgxTaskConfig {
    fn default() -> Self {
        Self {
            primary_resolution: 16,
            cascaded_resolution: 8,
            default_steps: 20_000,
            train: default_ggx_train(),
        }
    }
}

/// The peak near `h_z = 1` is only resolved once the primary has warped
/// coordinates towards it, which needs large early steps; a fast decay then
/// settles the fit.
pub fn default_ggx_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        scheduler: Scheduler::StepDecay {
            factor: 0.5,
            every: 2000,
        },
        ..TrainConfig::default()
    }
}

/// Identity uv-map primary (triangle wave) and a constant-0.5 cascaded array
/// without nonlinearity, since `D` is unbounded.
pub fn initial_ggx_network(primary_resolution: usize, cascaded_resolution: usize) -> Result<DInNetwork<f32>> {
    let mut p = GridArray::new(&[primary_resolution; 2], 2, Nonlinearity::Triangle)?;
    p.init_identity_ramp();
    let mut c = GridArray::new(&[cascaded_resolution; 2], 1, Nonlinearity::None)?;
    c.fill(0.5);
    DInNetwork::concatenated(vec![p], c)
}

pub fn train_ggx(config: &GgxTaskConfig) -> Result<Trained> {
    train_ggx_observed(config, &mut |_, _, _| {})
}

/// Like [`train_ggx`], calling `observe(step, loss, network)` after every
/// step.
pub fn train_ggx_observed(
    config: &GgxTaskConfig,
    observe: &mut dyn FnMut(usize, f64, &DInNetwork<f32>),
) -> Result<Trained> {
    let net = initial_ggx_network(config.primary_resolution, config.cascaded_resolution)?;
    let steps = config.train.steps_or(config.default_steps);
    let mut trainer = Trainer::new(net, config.train.clone(), Loss::Mae)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut batch = Batch::for_network(trainer.network());
    let mut loss = f64::NAN;
    for step in 0..steps {
        batch.clear();
        for _ in 0..config.train.batch_size {
            let (h_z, alpha) = sample_ggx_input(&mut rng);
            let d = ggx_reference(h_z, alpha)? as f32;
            batch.push(&[&[alpha as f32, h_z as f32]], &[d]);
        }
        loss = trainer.step(&batch)?;
        observe(step, loss, trainer.network());
    }
    Ok(Trained {
        network: trainer.into_network(),
        layout: None,
        final_loss: loss,
        steps,
    })
}

/// Network estimate of `D`, clamped at zero.
pub fn ggx_eval(net: &DInNetwork<f32>, h_z: f64, alpha: f64) -> Result<f64> {
    Ok((net.forward(&[&[alpha as f32, h_z as f32]])?[0] as f64).max(0.0))
}

/// PSNR after dividing both signals by the reference's 99th percentile and
/// clamping to `[0, 1]`; `D` is unbounded near `(h_z = 1, alpha -> 0)`.
pub fn normalized_psnr(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() || reference.is_empty() {
        return Err(Error::arg("normalized PSNR needs equal, non-empty inputs"));
    }
    let scale = percentile(reference, 0.99);
    if !(scale > 0.0) {
        return Err(Error::arg("reference 99th percentile is not positive"));
    }
    let mse = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| ((p / scale).clamp(0.0, 1.0) - (r / scale).clamp(0.0, 1.0)).powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(crate::image::psnr_from_mse(mse))
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Normalized PSNR of the network on a set of `(h_z, alpha)` inputs.
pub fn evaluate_ggx(net: &DInNetwork<f32>, inputs: &[(f64, f64)]) -> Result<f64> {
    let mut pred = Vec::with_capacity(inputs.len());
    let mut reference = Vec::with_capacity(inputs.len());
    let mut ws = net.workspace();
    for &(h_z, alpha) in inputs {
        pred.push((net.forward_with(&[&[alpha as f32, h_z as f32]], &mut ws)[0] as f64).max(0.0));
        reference.push(ggx_reference(h_z, alpha)?);
    }
    normalized_psnr(&pred, &reference)
}

/// Regular `(h_z, alpha)` grid with reference and network values as CSV.
pub fn ggx_grid_csv(net: &DInNetwork<f32>, h_z_steps: usize, alpha_steps: usize) -> Result<String> {
    if h_z_steps < 2 || alpha_steps < 2 {
        return Err(Error::arg("grid needs at least 2 steps per axis"));
    }
    let mut s = String::from("h_z,alpha,d_ref,d_net\n");
    for i in 0..h_z_steps {
        let h_z = i as f64 / (h_z_steps - 1) as f64;
        for j in 0..alpha_steps {
            let alpha = MIN_ALPHA + (1.0 - MIN_ALPHA) * j as f64 / (alpha_steps - 1) as f64;
            s.push_str(&format!(
                "{h_z},{alpha},{},{}\n",
                ggx_reference(h_z, alpha)?,
                ggx_eval(net, h_z, alpha)?
            ));
        }
    }
    Ok(s)
}
