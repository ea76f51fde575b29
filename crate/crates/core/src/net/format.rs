//! Binary model file, little-endian:
//!
//! ```text
//! magic "DIN1" | version u32 | array count u16
//! per array: dims u8 | resolution u32 x dims | channels u16
//!            | nonlinearity u8 (0 none, 1 triangle, 2 sine + f32 frequency)
//!            | quantization u8 (0: f32 payload;
//!                               1: (offset f32, scale f32) x channels, u8 payload)
//!            | payload, row-major, channel-interleaved
//! wiring: axis count u16 | (primary u16, channel u16) x axes
//! ```
//!
//! Arrays are stored primaries first, cascaded last.

use std::fs;
use std::path::Path;

use super::{DInNetwork, Wire};
use crate::error::{Error, Result};
use crate::grid::{GridArray, Nonlinearity, Quantization, MAX_DIMS};

pub const MAGIC: &[u8; 4] = b"DIN1";
pub const VERSION: u32 = 1;

pub fn write_model(net: &DInNetwork<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let arrays = net.arrays();
    out.extend_from_slice(&(arrays.len() as u16).to_le_bytes());
    for arr in arrays {
        out.push(arr.dims() as u8);
        for &n in arr.shape() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        out.extend_from_slice(&(arr.channels() as u16).to_le_bytes());
        out.push(arr.nonlinearity().id());
        if let Nonlinearity::Sine(n) = arr.nonlinearity() {
            out.extend_from_slice(&n.to_le_bytes());
        }
        match arr.quantization() {
            None => {
                out.push(0);
                for v in arr.cells() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Some(q) => {
                out.push(1);
                for (o, s) in q.offsets.iter().zip(&q.scales) {
                    out.extend_from_slice(&o.to_le_bytes());
                    out.extend_from_slice(&s.to_le_bytes());
                }
                out.extend_from_slice(&q.codes);
            }
        }
    }
    out.extend_from_slice(&(net.wiring().len() as u16).to_le_bytes());
    for w in net.wiring() {
        out.extend_from_slice(&(w.primary as u16).to_le_bytes());
        out.extend_from_slice(&(w.channel as u16).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated payload: needed {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::format(at as u64, msg)
    }
}

pub fn read_model(buf: &[u8]) -> Result<DInNetwork<f32>> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(r.err(0, format!("bad magic {magic:?}, expected \"DIN1\"")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(4, format!("unsupported format version {version}, expected {VERSION}")));
    }
    let count = r.u16()? as usize;
    if count < 2 {
        return Err(r.err(8, format!("a network needs at least 2 arrays, file declares {count}")));
    }
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let dims = r.u8()? as usize;
        if dims == 0 || dims > MAX_DIMS {
            return Err(r.err(at, format!("array dimensionality {dims} outside 1..={MAX_DIMS}")));
        }
        let shape = (0..dims).map(|_| r.u32().map(|n| n as usize)).collect::<Result<Vec<_>>>()?;
        let channels = r.u16()? as usize;
        let nl_at = r.pos;
        let nonlinearity = match r.u8()? {
            0 => Nonlinearity::None,
            1 => Nonlinearity::Triangle,
            2 => Nonlinearity::Sine(r.f32()?),
            id => return Err(r.err(nl_at, format!("unknown nonlinearity id {id}"))),
        };
        let q_at = r.pos;
        let values = shape.iter().try_fold(channels, |acc, &n| acc.checked_mul(n));
        let values = values.ok_or_else(|| r.err(at, "array size overflows"))?;
        let arr = match r.u8()? {
            0 => {
                let payload = r.take(values.checked_mul(4).ok_or_else(|| r.err(at, "array size overflows"))?)?;
                let cells = payload
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                GridArray::from_cells(&shape, channels, nonlinearity, cells)
            }
            1 => {
                let mut offsets = Vec::with_capacity(channels);
                let mut scales = Vec::with_capacity(channels);
                for _ in 0..channels {
                    offsets.push(r.f32()?);
                    scales.push(r.f32()?);
                }
                let codes = r.take(values)?.to_vec();
                GridArray::from_quantization(
                    &shape,
                    channels,
                    Quantization {
                        codes,
                        offsets,
                        scales,
                    },
                )
                .map(|mut a| {
                    a.set_nonlinearity(nonlinearity);
                    a
                })
            }
            id => return Err(r.err(q_at, format!("unknown quantization id {id}"))),
        }
        .map_err(|e| r.err(at, e.to_string()))?;
        arrays.push(arr);
    }
    let wiring_at = r.pos;
    let axes = r.u16()? as usize;
    let wiring = (0..axes)
        .map(|_| {
            Ok(Wire {
                primary: r.u16()? as usize,
                channel: r.u16()? as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let cascaded = arrays.pop().expect("count >= 2");
    DInNetwork::new(arrays, cascaded, wiring).map_err(|e| r.err(wiring_at, e.to_string()))
}

pub fn save(net: &DInNetwork<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_model(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DInNetwork<f32>> {
    read_model(&fs::read(path)?)
}
