//! Neural texture sampler: one network answers filtered texture lookups for
//! any `(uv, footprint)` pair, trained against a software trilinear sampler
//! over a box-filtered mip chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridArray, Nonlinearity};
use crate::image::{bilinear_sample_into, jitter_stratum, psnr, texel_uv, ImageBuffer};
use crate::net::{solve_layout_sampler, DInNetwork, Layout, Wire};
use crate::optim::{Loss, TrainConfig};
use crate::train::{Batch, Trained, Trainer};

/// Box-filtered pyramid; level 0 is the base texture, the last level 1x1.
#[derive(Clone, Debug, PartialEq)]
pub struct MipChain {
    levels: Vec<ImageBuffer>,
}

impl MipChain {
    pub fn levels(&self) -> &[ImageBuffer] {
        &self.levels
    }

    pub fn base_resolution(&self) -> usize {
        self.levels[0].width()
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }
}

pub fn build_mip_chain(img: &ImageBuffer) -> Result<MipChain> {
    let n = img.width();
    if img.height() != n || !n.is_power_of_two() {
        return Err(Error::arg(format!(
            "mip chains need a square power-of-two texture, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let k = img.channels();
    let mut levels = vec![img.clone()];
    while levels.last().unwrap().width() > 1 {
        let prev = levels.last().unwrap();
        let half = prev.width() / 2;
        let mut data = Vec::with_capacity(half * half * k);
        for y in 0..half {
            for x in 0..half {
                for ch in 0..k {
                    let s = prev.pixel(2 * x, 2 * y)[ch] as f64
                        + prev.pixel(2 * x + 1, 2 * y)[ch] as f64
                        + prev.pixel(2 * x, 2 * y + 1)[ch] as f64
                        + prev.pixel(2 * x + 1, 2 * y + 1)[ch] as f64;
                    data.push((s * 0.25) as f32);
                }
            }
        }
        levels.push(ImageBuffer::from_data(half, half, k, data)?);
    }
    Ok(MipChain { levels })
}

/// Continuous level of detail of a footprint: `log2(f * N_base)`, clamped to
/// the chain. Footprints at or below one base texel select level 0.
pub fn footprint_lod(footprint: f32, base_resolution: usize, levels: usize) -> f32 {
    let n = base_resolution as f32;
    (footprint.max(1.0 / n) * n).log2().clamp(0.0, (levels - 1) as f32)
}

/// Trilinear lookup: bilinear samples of the two levels around the
/// footprint's level of detail, blended linearly.
pub fn proxy_trilinear_into(chain: &MipChain, uv: [f32; 2], footprint: f32, out: &mut [f32]) {
    let lod = footprint_lod(footprint, chain.base_resolution(), chain.levels.len());
    let lo = lod.floor() as usize;
    let t = lod - lo as f32;
    bilinear_sample_into(&chain.levels[lo], uv, out);
    if t > 0.0 {
        let mut hi = [0.0f32; 16];
        let hi = &mut hi[..out.len()];
        bilinear_sample_into(&chain.levels[lo + 1], uv, hi);
        for (o, h) in out.iter_mut().zip(hi.iter()) {
            *o += (h - *o) * t;
        }
    }
}

pub fn proxy_trilinear(chain: &MipChain, uv: [f32; 2], footprint: f32) -> Vec<f32> {
    let mut out = vec![0.0; chain.channels()];
    proxy_trilinear_into(chain, uv, footprint, &mut out);
    out
}

/// Exponent `n` of the power law `x = u^n` that puts a fraction `p` of the
/// samples at or below one base texel: `n = log_p(1 / N_base)`.
pub fn lod_exponent(base_resolution: usize, p: f64) -> f64 {
    (base_resolution as f64).ln() / -p.ln()
}

/// Rate of the exponential footprint law with `P(x <= t) = p`.
pub fn lod_lambda(p: f64, t: f64) -> f64 {
    -(1.0 - p).ln() / t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FootprintLaw {
    #[default]
    PowerLaw,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootprintSampleConfig {
    /// Fraction of samples at level 0.
    pub p: f64,
    pub law: FootprintLaw,
}

impl Default for FootprintSampleConfig {
    fn default() -> Self {
        Self {
            p: 0.5,
            law: FootprintLaw::PowerLaw,
        }
    }
}

/// Draws footprints in `[0, 1)` for a texture of side `base_resolution`.
pub struct FootprintSampler {
    law: FootprintLaw,
    exponent: f64,
    exp: Option<Exp<f64>>,
}

impl FootprintSampler {
    pub fn new(base_resolution: usize, config: &FootprintSampleConfig) -> Result<Self> {
        if !(config.p > 0.0 && config.p < 1.0) || base_resolution < 2 {
            return Err(Error::arg(format!(
                "footprint sampling needs 0 < p < 1 and N_base >= 2, got p={} N_base={base_resolution}",
                config.p
            )));
        }
        let t = 1.0 / base_resolution as f64;
        let exp = match config.law {
            FootprintLaw::PowerLaw => None,
            FootprintLaw::Exponential => {
                Some(Exp::new(lod_lambda(config.p, t)).map_err(|e| Error::arg(e.to_string()))?)
            }
        };
        Ok(Self {
            law: config.law,
            exponent: lod_exponent(base_resolution, config.p),
            exp,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self.law {
            FootprintLaw::PowerLaw => rng.random::<f64>().powf(self.exponent),
            // Truncated to [0, 1) by rejection.
            FootprintLaw::Exponential => loop {
                let x = self.exp.as_ref().unwrap().sample(rng);
                if x < 1.0 {
                    break x;
                }
            },
        }
    }
}

pub fn sample_footprints(
    base_resolution: usize,
    config: &FootprintSampleConfig,
    rng: &mut impl Rng,
    count: usize,
) -> Result<Vec<f64>> {
    let s = FootprintSampler::new(base_resolution, config)?;
    Ok((0..count).map(|_| s.sample(rng)).collect())
}

/// Footprint of a screen pixel from the uv derivatives along screen x and y:
/// the area of the parallelogram they span.
pub fn footprint_from_derivatives(ddx: [f32; 2], ddy: [f32; 2]) -> f32 {
    (ddx[0] * ddy[1] - ddx[1] * ddy[0]).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerTaskConfig {
    pub compression: f64,
    /// `None` picks [`default_sampler_rho`].
    pub rho: Option<f64>,
    pub footprint: FootprintSampleConfig,
    /// Ablation: feed footprint 0 to the network regardless of the sample.
    pub ignore_footprint: bool,
    pub epochs: usize,
    pub train: TrainConfig,
}

impl Default for SamplerTaskConfig {
    fn default() -> Self {
        Self {
            compression: 6.0,
            rho: None,
            footprint: FootprintSampleConfig::default(),
            ignore_footprint: false,
            epochs: 40,
            train: TrainConfig::default(),
        }
    }
}

/// Ratio of the uv primary's side to the cascaded side. At 1K and above the
/// empirically good values for RGB (k <= 4) and material stacks are used;
/// smaller textures get the ratio that makes the cascaded side 8.
pub fn default_sampler_rho(base_resolution: usize, k: usize, compression: f64) -> f64 {
    if base_resolution >= 1024 {
        let rgb = k <= 4;
        match compression {
            e if e < 4.5 => if rgb { 80.0 } else { 128.0 },
            e if e < 18.0 => if rgb { 64.0 } else { 96.0 },
            _ => if rgb { 48.0 } else { 72.0 },
        }
    } else {
        let lod = crate::net::lod_resolution_for(base_resolution) as f64;
        let budget = (base_resolution * base_resolution * k) as f64 / compression - 4.0 * lod;
        [8.0f64, 4.0]
            .into_iter()
            .find_map(|nc| {
                let primary = budget - k as f64 * nc.powi(3) * lod;
                (primary > 0.0).then(|| (primary / 3.0).sqrt() / nc)
            })
            .unwrap_or(2.0)
            .max(1.0)
    }
}

/// Network inputs for one lookup.
#[inline]
fn footprint_input(footprint: f32, ignore: bool) -> [f32; 1] {
    [if ignore { 0.0 } else { footprint }]
}

pub fn train_sampler(img: &ImageBuffer, config: &SamplerTaskConfig) -> Result<Trained> {
    train_sampler_observed(img, config, &mut |_, _| {})
}

pub fn train_sampler_observed(
    img: &ImageBuffer,
    config: &SamplerTaskConfig,
    observe: &mut dyn FnMut(usize, f64),
) -> Result<Trained> {
    let chain = build_mip_chain(img)?;
    let n = chain.base_resolution();
    let k = img.channels();
    if k > 16 {
        return Err(Error::arg(format!("at most 16 channels supported, got {k}")));
    }
    if !(config.compression > 1.0) {
        return Err(Error::config(format!("compression must exceed 1, got {}", config.compression)));
    }
    let rho = config.rho.unwrap_or_else(|| default_sampler_rho(n, k, config.compression));
    let layout = solve_layout_sampler(n, k, config.compression, rho)?;
    let footprints = FootprintSampler::new(n, &config.footprint)?;
    let net = initial_network(&layout, &img.mean())?;

    let strata = n * n;
    let steps = config.train.steps_or(config.epochs * strata.div_ceil(config.train.batch_size));
    let mut trainer = Trainer::new(net, config.train.clone(), Loss::Mae)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut batch = Batch::for_network(trainer.network());
    let mut order: Vec<u32> = Vec::new();
    let mut cursor = 0;
    let mut target = vec![0.0f32; k];
    let mut loss = f64::NAN;
    for step in 0..steps {
        batch.clear();
        while batch.len() < config.train.batch_size {
            if cursor == order.len() {
                order = (0..strata as u32).collect();
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                cursor = 0;
            }
            let uv = jitter_stratum(order[cursor] as usize, n, n, &mut rng);
            cursor += 1;
            let f = footprints.sample(&mut rng) as f32;
            proxy_trilinear_into(&chain, uv, f, &mut target);
            batch.push(&[&uv, &footprint_input(f, config.ignore_footprint)], &target);
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

/// uv primary (3 channels) and footprint primary (1 channel), both
/// identity ramps; the cascaded array's first axis is the footprint axis and
/// every channel starts at the texture mean.
fn initial_network(layout: &Layout, mean: &[f64]) -> Result<DInNetwork<f32>> {
    let np0 = layout.primary_resolution;
    let np1 = layout.footprint_resolution.expect("sampler layout");
    let nlod = layout.lod_resolution.expect("sampler layout");
    let nc = layout.cascaded_resolution;
    let mut uv = GridArray::new(&[np0, np0], 3, Nonlinearity::Triangle)?;
    uv.init_identity_ramp();
    let mut fp = GridArray::new(&[np1], 1, Nonlinearity::Triangle)?;
    fp.init_identity_ramp();
    let mut cascaded = GridArray::new(&[nlod, nc, nc, nc], mean.len(), Nonlinearity::None)?;
    for (ch, &m) in mean.iter().enumerate() {
        cascaded.fill_channel(ch, m as f32);
    }
    DInNetwork::new(
        vec![uv, fp],
        cascaded,
        vec![
            Wire { primary: 1, channel: 0 },
            Wire { primary: 0, channel: 0 },
            Wire { primary: 0, channel: 1 },
            Wire { primary: 0, channel: 2 },
        ],
    )
}

fn check_sampler_net(net: &DInNetwork<f32>) -> Result<()> {
    let p = net.primaries();
    if p.len() != 2 || p[0].dims() != 2 || p[1].dims() != 1 {
        return Err(Error::config("not a texture sampler network"));
    }
    Ok(())
}

/// Evaluates the sampler at every base texel for one footprint.
pub fn decode_sampler(
    net: &DInNetwork<f32>,
    size: usize,
    footprint: f32,
    ignore_footprint: bool,
) -> Result<ImageBuffer> {
    check_sampler_net(net)?;
    let k = net.output_channels();
    let f = footprint_input(footprint, ignore_footprint);
    let data: Vec<f32> = (0..size)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut ws = net.workspace();
            let mut row = Vec::with_capacity(size * k);
            for x in 0..size {
                let uv = texel_uv(x, y, size, size);
                row.extend(net.forward_with(&[&uv, &f], &mut ws).iter().map(|v| v.clamp(0.0, 1.0)));
            }
            row
        })
        .collect();
    ImageBuffer::from_data(size, size, k, data)
}

/// Proxy-sampler reference at every base texel for one footprint.
pub fn reference_image(chain: &MipChain, footprint: f32) -> Result<ImageBuffer> {
    let n = chain.base_resolution();
    let k = chain.channels();
    let mut data = vec![0.0f32; n * n * k];
    for y in 0..n {
        for x in 0..n {
            let i = (y * n + x) * k;
            proxy_trilinear_into(chain, texel_uv(x, y, n, n), footprint, &mut data[i..i + k]);
        }
    }
    ImageBuffer::from_data(n, n, k, data)
}

/// `0` and the powers of two from one base texel up to 1.
pub fn evaluation_footprints(base_resolution: usize) -> Vec<f32> {
    let mut f = vec![0.0];
    let mut v = 1.0 / base_resolution as f32;
    while v <= 1.0 {
        f.push(v);
        v *= 2.0;
    }
    f
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootprintPsnr {
    pub footprint: f32,
    pub lod: f32,
    pub psnr: f64,
}

pub fn evaluate_sampler(
    net: &DInNetwork<f32>,
    chain: &MipChain,
    footprints: &[f32],
    ignore_footprint: bool,
) -> Result<Vec<FootprintPsnr>> {
    let n = chain.base_resolution();
    footprints
        .iter()
        .map(|&f| {
            let out = decode_sampler(net, n, f, ignore_footprint)?;
            Ok(FootprintPsnr {
                footprint: f,
                lod: footprint_lod(f, n, chain.levels.len()),
                psnr: psnr(&reference_image(chain, f)?, &out)?,
            })
        })
        .collect()
}

pub fn footprint_psnr_csv(rows: &[FootprintPsnr]) -> String {
    let mut s = String::from("footprint,lod,psnr_db\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.footprint, r.lod, r.psnr));
    }
    s
}
