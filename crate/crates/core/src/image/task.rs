use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bilinear_sample_into, stratified_uv_batch, texel_uv, ImageBuffer};
use crate::error::{Error, Result};
use crate::grid::{GridArray, Nonlinearity};
use crate::net::{solve_layout_image, DInNetwork, Layout};
use crate::optim::{Loss, TrainConfig};
use crate::train::{Batch, Trained, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageTaskConfig {
    pub compression: f64,
    /// `None` picks [`default_image_rho`].
    pub rho: Option<f64>,
    /// Dimensionality of the cascaded array (2..=4); also the primary's
    /// channel count.
    pub cascaded_dims: usize,
    /// Initial cascaded value per image channel; `None` means grey.
    pub init_values: Option<Vec<f32>>,
    /// Passes over all texel strata, used when `train.steps` is unset.
    pub epochs: usize,
    pub train: TrainConfig,
}

impl Default for ImageTaskConfig {
    fn default() -> Self {
        Self {
            compression: 6.0,
            rho: None,
            cascaded_dims: 4,
            init_values: None,
            epochs: 40,
            train: TrainConfig::default(),
        }
    }
}

/// Default side-length ratio for a square base texture. Large textures use
/// the empirically good values (which shrink with stronger compression);
/// below 1K the ratio is chosen so the cascaded side comes out at 8.
pub fn default_image_rho(base_resolution: usize, k: usize, compression: f64, cascaded_dims: usize) -> f64 {
    if base_resolution >= 4096 {
        if compression < 9.0 {
            128.0
        } else if compression < 18.0 {
            80.0
        } else {
            72.0
        }
    } else if base_resolution >= 1024 {
        64.0
    } else {
        let budget = (base_resolution * base_resolution * k) as f64 / compression;
        [8.0f64, 4.0]
            .into_iter()
            .find_map(|nc| {
                let primary = budget - k as f64 * nc.powi(cascaded_dims as i32);
                (primary > 0.0).then(|| (primary / cascaded_dims as f64).sqrt() / nc)
            })
            .unwrap_or(2.0)
            .max(1.0)
    }
}

pub fn train_image(img: &ImageBuffer, config: &ImageTaskConfig) -> Result<Trained> {
    train_image_observed(img, config, &mut |_, _| {})
}

/// Like [`train_image`], calling `observe(step, loss)` after every step.
pub fn train_image_observed(
    img: &ImageBuffer,
    config: &ImageTaskConfig,
    observe: &mut dyn FnMut(usize, f64),
) -> Result<Trained> {
    let cd = config.cascaded_dims;
    if !(2..=4).contains(&cd) {
        return Err(Error::config(format!("cascaded dims must be 2..=4, got {cd}")));
    }
    if !(config.compression > 1.0) {
        return Err(Error::config(format!("compression must exceed 1, got {}", config.compression)));
    }
    if img.width() != img.height() {
        return Err(Error::arg(format!("image must be square, got {}x{}", img.width(), img.height())));
    }
    let k = img.channels();
    let init = match &config.init_values {
        Some(v) if v.len() != k => {
            return Err(Error::config(format!("{} init values for {k} channels", v.len())));
        }
        Some(v) => v.clone(),
        None => vec![0.5; k],
    };
    let rho = config
        .rho
        .unwrap_or_else(|| default_image_rho(img.width(), k, config.compression, cd));
    let layout = solve_layout_image(img.width(), k, config.compression, rho, cd)?;
    let net = initial_network(&layout, cd, &init)?;

    let steps = config
        .train
        .steps_or(config.epochs * (img.width() * img.height()).div_ceil(config.train.batch_size));
    let mut trainer = Trainer::new(net, config.train.clone(), Loss::Mae)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut batch = Batch::for_network(trainer.network());
    let mut epoch: Vec<[f32; 2]> = Vec::new();
    let mut cursor = 0;
    let mut target = vec![0.0f32; k];
    let mut loss = f64::NAN;
    for step in 0..steps {
        batch.clear();
        while batch.len() < config.train.batch_size {
            if cursor == epoch.len() {
                epoch = stratified_uv_batch(img.width(), img.height(), &mut rng);
                cursor = 0;
            }
            let uv = epoch[cursor];
            cursor += 1;
            bilinear_sample_into(img, uv, &mut target);
            batch.push(&[&uv], &target);
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

/// Identity-ramp triangle-wave primary and a role-initialized cascaded array.
fn initial_network(layout: &Layout, cascaded_dims: usize, init: &[f32]) -> Result<DInNetwork<f32>> {
    let np = layout.primary_resolution;
    let nc = layout.cascaded_resolution;
    let mut primary = GridArray::new(&[np, np], cascaded_dims, Nonlinearity::Triangle)?;
    primary.init_identity_ramp();
    let mut cascaded = GridArray::new(&vec![nc; cascaded_dims], init.len(), Nonlinearity::None)?;
    for (ch, &v) in init.iter().enumerate() {
        cascaded.fill_channel(ch, v);
    }
    DInNetwork::concatenated(vec![primary], cascaded)
}

/// Evaluates the network at every texel position, clamping to `[0, 1]`.
pub fn decode_image(net: &DInNetwork<f32>, width: usize, height: usize) -> Result<ImageBuffer> {
    if net.primaries().len() != 1 || net.primaries()[0].dims() != 2 {
        return Err(Error::config("image decoding needs a single 2-D primary"));
    }
    let k = net.output_channels();
    let mut out = ImageBuffer::new(width, height, k)?;
    out.data
        .par_chunks_mut(width * k)
        .enumerate()
        .for_each_init(
            || net.workspace(),
            |ws, (y, row)| {
                for x in 0..width {
                    let uv = texel_uv(x, y, width, height);
                    let px = net.forward_with(&[&uv], ws);
                    for (dst, &v) in row[x * k..(x + 1) * k].iter_mut().zip(px) {
                        *dst = v.clamp(0.0, 1.0);
                    }
                }
            },
        );
    Ok(out)
}
