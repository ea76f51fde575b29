use super::{GridArray, Nonlinearity};
use crate::error::{Error, Result};

/// How cell values are mapped onto 8-bit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantRange {
    /// Fixed `[0, 1]` range; used for arrays whose (baked) values are bounded
    /// by a periodic nonlinearity.
    Unit,
    /// Per-channel affine `[min, max]` range, for unbounded arrays.
    PerChannel,
}

/// 8-bit codes plus per-channel affine dequantization parameters:
/// `value = offset + scale * code / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantization {
    pub codes: Vec<u8>,
    pub offsets: Vec<f32>,
    pub scales: Vec<f32>,
}

#[inline]
pub fn dequantize(code: u8, offset: f32, scale: f32) -> f32 {
    offset + scale * (code as f32 / 255.0)
}

impl GridArray<f32> {
    /// Quantizes to 8 bits. Periodic arrays are baked first and coded on
    /// `[0, 1]`; arrays without a nonlinearity use a per-channel range.
    pub fn quantize8(&self) -> GridArray<f32> {
        let range = if self.nonlinearity.is_periodic() {
            QuantRange::Unit
        } else {
            QuantRange::PerChannel
        };
        self.quantize8_with(range)
    }

    pub fn quantize8_with(&self, range: QuantRange) -> GridArray<f32> {
        let baked = self.bake_nonlinearity();
        let c = self.channels;
        let (offsets, scales) = match range {
            QuantRange::Unit => (vec![0.0; c], vec![1.0; c]),
            QuantRange::PerChannel => {
                let mut lo = vec![f32::INFINITY; c];
                let mut hi = vec![f32::NEG_INFINITY; c];
                for (i, &v) in baked.cells.iter().enumerate() {
                    lo[i % c] = lo[i % c].min(v);
                    hi[i % c] = hi[i % c].max(v);
                }
                let scales = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
                (lo, scales)
            }
        };
        let codes: Vec<u8> = baked
            .cells
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (o, s) = (offsets[i % c], scales[i % c]);
                if s == 0.0 {
                    0
                } else {
                    ((v - o) / s * 255.0).round().clamp(0.0, 255.0) as u8
                }
            })
            .collect();
        let q = Quantization {
            codes,
            offsets,
            scales,
        };
        GridArray::from_quantization(&self.shape, c, q).expect("shape already validated")
    }

    /// Rebuilds a (baked) array from 8-bit codes.
    pub fn from_quantization(shape: &[usize], channels: usize, q: Quantization) -> Result<Self> {
        if q.offsets.len() != channels || q.scales.len() != channels {
            return Err(Error::arg(format!(
                "quantization carries {} offsets / {} scales for {} channels",
                q.offsets.len(),
                q.scales.len(),
                channels
            )));
        }
        let cells = q
            .codes
            .iter()
            .enumerate()
            .map(|(i, &code)| dequantize(code, q.offsets[i % channels], q.scales[i % channels]))
            .collect();
        let mut arr = GridArray::from_cells(shape, channels, Nonlinearity::None, cells)?;
        arr.quantization = Some(q);
        Ok(arr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_half_on_unit_range() {
        let mut a = GridArray::<f32>::new(&[4, 4], 1, Nonlinearity::Triangle).unwrap();
        a.fill(0.5);
        let q = a.quantize8();
        let qz = q.quantization().unwrap();
        assert!(qz.codes.iter().all(|&c| c == 128));
        assert_eq!((qz.offsets[0], qz.scales[0]), (0.0, 1.0));
        assert!((q.cells()[0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn range_endpoints_round_trip() {
        let a = GridArray::<f32>::from_cells(&[2], 1, Nonlinearity::None, vec![0.0, 1.0]).unwrap();
        for q in [a.quantize8(), a.quantize8_with(QuantRange::Unit)] {
            assert_eq!(q.quantization().unwrap().codes, vec![0, 255]);
            assert_eq!(q.cells(), &[0.0, 1.0]);
        }
    }

    #[test]
    fn degenerate_channel_stores_constant() {
        let a = GridArray::<f32>::from_cells(&[3], 2, Nonlinearity::None, vec![-2.5, 0.0, -2.5, 1.0, -2.5, 3.0])
            .unwrap();
        let q = a.quantize8();
        let qz = q.quantization().unwrap();
        assert_eq!(qz.scales[0], 0.0);
        assert_eq!(qz.offsets[0], -2.5);
        assert_eq!(qz.codes[0], 0);
        assert_eq!(q.cells()[2], -2.5);
        assert_eq!(q.cells()[5], 3.0);
    }

    #[test]
    fn periodic_arrays_encode_baked_values() {
        let a = GridArray::<f32>::from_cells(&[3], 1, Nonlinearity::Triangle, vec![3.0, -0.5, 1.75]).unwrap();
        let q = a.quantize8();
        assert_eq!(q.nonlinearity(), Nonlinearity::None);
        assert_eq!(q.quantization().unwrap().codes, vec![255, 128, 64]);
    }

    #[test]
    fn cell_mutation_drops_codes() {
        let a = GridArray::<f32>::from_cells(&[2], 1, Nonlinearity::None, vec![0.0, 1.0]).unwrap();
        let mut q = a.quantize8();
        q.cells_mut()[0] = 0.25;
        assert!(!q.is_quantized());
    }
}
