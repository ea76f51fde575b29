//! Images as multi-channel sample grids, plus the compact image
//! representation task: a 2-D primary feeding a (by default) 4-D cascaded
//! array that stores colors.

mod io;
mod task;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub use io::{
    load_manifest, read_image, read_pnm, save_manifest, write_image, write_pnm, ChannelRole, Manifest,
    ManifestLayer,
};
pub use task::{decode_image, default_image_rho, train_image, train_image_observed, ImageTaskConfig};

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_data(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::arg(format!(
                "image dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::arg(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::arg(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: &[f32]) -> Result<Self> {
        let data = value.iter().copied().cycle().take(width * height * value.len()).collect();
        Self::from_data(width, height, value.len(), data)
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_data(width, height, channels, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[f32]) {
        let i = (y * self.width + x) * self.channels;
        for (dst, &v) in self.data[i..i + self.channels].iter_mut().zip(value) {
            *dst = v.clamp(0.0, 1.0);
        }
    }

    /// Stacks images of equal size channel-wise.
    pub fn stack(layers: &[ImageBuffer]) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::arg("no layers to stack"))?;
        let (w, h) = (first.width, first.height);
        if layers.iter().any(|l| l.width != w || l.height != h) {
            return Err(Error::arg("stacked layers differ in size"));
        }
        let channels = layers.iter().map(|l| l.channels).sum();
        let mut data = Vec::with_capacity(w * h * channels);
        for p in 0..w * h {
            for l in layers {
                data.extend_from_slice(&l.data[p * l.channels..(p + 1) * l.channels]);
            }
        }
        Self::from_data(w, h, channels, data)
    }

    /// Channels `range` as a separate image.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > self.channels {
            return Err(Error::arg(format!("channel range {range:?} out of 0..{}", self.channels)));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .flat_map(|px| px[range.clone()].iter().copied())
            .collect();
        Self::from_data(self.width, self.height, range.len(), data)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut sum = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, &v) in sum.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = (self.width * self.height) as f64;
        sum.iter().map(|s| s / n).collect()
    }
}

/// Continuous texel index of `t` along an axis with `n` texels, and the
/// lower neighbour plus blend weight.
#[inline]
fn axis_lerp(t: f32, n: usize) -> (usize, usize, f32) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let u = t.clamp(0.0, 1.0) * (n - 1) as f32;
    let i0 = (u.floor() as usize).min(n - 2);
    (i0, i0 + 1, u - i0 as f32)
}

/// Vertex-centred bilinear sample (texel `i` sits at `i / (W - 1)`), written
/// to `out`. Coordinates are clamped to `[0, 1]`.
pub fn bilinear_sample_into(img: &ImageBuffer, uv: [f32; 2], out: &mut [f32]) {
    let (x0, x1, fx) = axis_lerp(uv[0], img.width);
    let (y0, y1, fy) = axis_lerp(uv[1], img.height);
    let (a, b, c, d) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    for ch in 0..img.channels {
        let top = a[ch] + (b[ch] - a[ch]) * fx;
        let bottom = c[ch] + (d[ch] - c[ch]) * fx;
        out[ch] = top + (bottom - top) * fy;
    }
}

pub fn bilinear_sample(img: &ImageBuffer, uv: [f32; 2]) -> Vec<f32> {
    let mut out = vec![0.0; img.channels];
    bilinear_sample_into(img, uv, &mut out);
    out
}

/// Position of texel `(x, y)` in the vertex-centred convention.
pub fn texel_uv(x: usize, y: usize, width: usize, height: usize) -> [f32; 2] {
    let pos = |i: usize, n: usize| if n == 1 { 0.5 } else { i as f32 / (n - 1) as f32 };
    [pos(x, width), pos(y, height)]
}

/// One epoch of stratified samples: a uniformly jittered point in every
/// texel stratum `[i/W, (i+1)/W) x [j/H, (j+1)/H)`, in shuffled order.
pub fn stratified_uv_batch(width: usize, height: usize, rng: &mut impl Rng) -> Vec<[f32; 2]> {
    let mut strata: Vec<u32> = (0..(width * height) as u32).collect();
    strata.shuffle(rng);
    strata
        .into_iter()
        .map(|s| jitter_stratum(s as usize, width, height, rng))
        .collect()
}

/// Uniform point inside stratum `s` (row-major texel index).
pub fn jitter_stratum(s: usize, width: usize, height: usize, rng: &mut impl Rng) -> [f32; 2] {
    let (x, y) = (s % width, s / width);
    // The upper edge is excluded; `f32` rounding could otherwise land on it.
    let u = ((x as f32 + rng.random::<f32>()) / width as f32).min(next_below(((x + 1) as f32) / width as f32));
    let v = ((y as f32 + rng.random::<f32>()) / height as f32).min(next_below(((y + 1) as f32) / height as f32));
    [u, v]
}

fn next_below(v: f32) -> f32 {
    f32::from_bits(v.to_bits() - 1)
}

/// Index of the stratum containing `uv`.
pub fn stratum_of(uv: [f32; 2], width: usize, height: usize) -> usize {
    let x = ((uv[0] * width as f32) as usize).min(width - 1);
    let y = ((uv[1] * height as f32) as usize).min(height - 1);
    y * width + x
}

/// Bilinear point-sampled resize to `width x height`.
pub fn resize_bilinear(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    let mut out = ImageBuffer::new(width, height, img.channels)?;
    let k = img.channels;
    for y in 0..height {
        for x in 0..width {
            let i = (y * width + x) * k;
            bilinear_sample_into(img, texel_uv(x, y, width, height), &mut out.data[i..i + k]);
        }
    }
    Ok(out)
}

/// Reference codec for a compression ratio `e`: shrink each side by `sqrt(e)`
/// with bilinear resampling and scale back up the same way.
pub fn downsample_baseline(img: &ImageBuffer, compression: f64) -> Result<ImageBuffer> {
    if !(compression >= 1.0) {
        return Err(Error::arg(format!("compression must be >= 1, got {compression}")));
    }
    let s = compression.sqrt();
    let w = ((img.width as f64 / s).round() as usize).max(1);
    let h = ((img.height as f64 / s).round() as usize).max(1);
    resize_bilinear(&resize_bilinear(img, w, h)?, img.width, img.height)
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::arg(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
    Ok(sum / a.data.len() as f64)
}

/// `10 log10(1 / MSE)` over all channels jointly; identical images give
/// `+inf`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checker_center_is_half() {
        let img = ImageBuffer::from_data(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(bilinear_sample(&img, [0.5, 0.5]), vec![0.5]);
    }

    #[test]
    fn texel_positions_return_texels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..5 * 3 * 2).map(|_| rng.random()).collect();
        let img = ImageBuffer::from_data(5, 3, 2, data).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                let s = bilinear_sample(&img, texel_uv(x, y, 5, 3));
                for (a, b) in s.iter().zip(img.pixel(x, y)) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn constant_image_samples_constant() {
        let img = ImageBuffer::constant(7, 4, &[0.25, 0.75]).unwrap();
        assert_eq!(bilinear_sample(&img, [0.3, 0.9]), vec![0.25, 0.75]);
        let one = ImageBuffer::constant(1, 1, &[0.5]).unwrap();
        assert_eq!(bilinear_sample(&one, [0.1, 0.7]), vec![0.5]);
    }

    #[test]
    fn strata_are_each_hit_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let uvs = stratified_uv_batch(6, 5, &mut rng);
        let mut seen = vec![0; 30];
        for uv in uvs {
            seen[stratum_of(uv, 6, 5)] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn psnr_examples() {
        let a = ImageBuffer::constant(3, 3, &[0.5]).unwrap();
        let b = ImageBuffer::constant(3, 3, &[0.0]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 6.020599913279624).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let one = ImageBuffer::constant(3, 3, &[1.0]).unwrap();
        assert_eq!(psnr(&one, &b).unwrap(), 0.0);
        let c = ImageBuffer::constant(3, 2, &[0.0]).unwrap();
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ImageBuffer::from_data(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(0, 1, 1).is_err());
    }

    #[test]
    fn stack_and_select_round_trip() {
        let a = ImageBuffer::constant(2, 2, &[0.1, 0.2, 0.3]).unwrap();
        let b = ImageBuffer::constant(2, 2, &[0.9]).unwrap();
        let s = ImageBuffer::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.channels(), 4);
        assert_eq!(s.select_channels(0..3).unwrap(), a);
        assert_eq!(s.select_channels(3..4).unwrap(), b);
    }
}
