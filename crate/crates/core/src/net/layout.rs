use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest cascaded side the search will consider.
const MAX_CASCADED_SIDE: usize = 1 << 16;

/// Byte count of a candidate layout, one byte per stored value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteModel {
    /// `primary_channels * N_p^primary_dims + k * N_c^cascaded_dims`.
    Uniform {
        primary_dims: u32,
        primary_channels: u32,
        cascaded_dims: u32,
    },
    /// Texture sampler: `3 N_p0^2 + N_p1 + k * N_c^3 * N_lod` with
    /// `N_p1 = 4 N_lod`.
    Sampler { lod_resolution: usize },
}

impl ByteModel {
    fn bytes(&self, primary: usize, cascaded: usize, k: usize) -> u64 {
        let (p, c, k) = (primary as u64, cascaded as u64, k as u64);
        match *self {
            ByteModel::Uniform {
                primary_dims,
                primary_channels,
                cascaded_dims,
            } => primary_channels as u64 * p.pow(primary_dims) + k * c.pow(cascaded_dims),
            ByteModel::Sampler { lod_resolution } => {
                let lod = lod_resolution as u64;
                3 * p * p + 4 * lod + k * c.pow(3) * lod
            }
        }
    }
}

/// Resolved array resolutions for a byte budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub rho: f64,
    /// Uncompressed size `B` the compression target refers to.
    pub uncompressed_bytes: u64,
    pub target_compression: f64,
    /// `N_p` (`N_p0` for the sampler).
    pub primary_resolution: usize,
    pub cascaded_resolution: usize,
    /// `N_p1`, sampler only.
    pub footprint_resolution: Option<usize>,
    /// `N_lod`, sampler only.
    pub lod_resolution: Option<usize>,
    pub channels: usize,
    pub achieved_bytes: u64,
    pub model: ByteModel,
}

impl Layout {
    pub fn achieved_compression(&self) -> f64 {
        self.uncompressed_bytes as f64 / self.achieved_bytes as f64
    }

    /// Byte budget implied by the target, `B / e`.
    pub fn budget_bytes(&self) -> f64 {
        self.uncompressed_bytes as f64 / self.target_compression
    }
}

fn nearest_multiple_of_8(v: f64) -> usize {
    ((v / 8.0).round() as usize).max(1) * 8
}

/// Linear search over `N_c` in multiples of 4 (with `N_p` the multiple of 8
/// nearest to `rho * N_c`) minimizing `|e - B / B_comp|`. Ties go to the
/// smaller cascaded array.
///
/// Fails when even the smallest layout is no smaller than the uncompressed
/// data.
pub fn solve_layout(uncompressed_bytes: u64, k: usize, e: f64, rho: f64, model: ByteModel) -> Result<Layout> {
    if !(e > 0.0) {
        return Err(Error::arg(format!("compression target must be positive, got {e}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::arg(format!("rho must be positive, got {rho}")));
    }
    if k == 0 {
        return Err(Error::arg("at least one channel is required"));
    }
    let b = uncompressed_bytes as f64;
    let mut best: Option<(f64, usize, usize, u64)> = None;
    let mut nc = 4;
    while nc <= MAX_CASCADED_SIDE {
        let np = nearest_multiple_of_8(rho * nc as f64);
        let bytes = model.bytes(np, nc, k);
        if best.is_none() && bytes >= uncompressed_bytes {
            return Err(Error::InfeasibleLayout(format!(
                "smallest layout (N_p={np}, N_c={nc}) needs {bytes} bytes, uncompressed size is {uncompressed_bytes}"
            )));
        }
        let ratio = b / bytes as f64;
        let err = (e - ratio).abs();
        if best.is_none_or(|(best_err, ..)| err < best_err) {
            best = Some((err, np, nc, bytes));
        }
        // B_comp never shrinks as N_c grows, so past the crossing the error
        // only increases.
        if ratio < e {
            break;
        }
        nc += 4;
    }
    let (_, np, nc, bytes) = best.expect("at least one candidate evaluated");
    let (footprint_resolution, lod_resolution) = match model {
        ByteModel::Sampler { lod_resolution } => (Some(4 * lod_resolution), Some(lod_resolution)),
        ByteModel::Uniform { .. } => (None, None),
    };
    Ok(Layout {
        rho,
        uncompressed_bytes,
        target_compression: e,
        primary_resolution: np,
        cascaded_resolution: nc,
        footprint_resolution,
        lod_resolution,
        channels: k,
        achieved_bytes: bytes,
        model,
    })
}

/// Image layout: 2-D primary with `cascaded_dims` channels feeding a
/// `cascaded_dims`-D cascaded array with `k` channels.
pub fn solve_layout_image(base_resolution: usize, k: usize, e: f64, rho: f64, cascaded_dims: usize) -> Result<Layout> {
    let b = (base_resolution * base_resolution * k) as u64;
    solve_layout(
        b,
        k,
        e,
        rho,
        ByteModel::Uniform {
            primary_dims: 2,
            primary_channels: cascaded_dims as u32,
            cascaded_dims: cascaded_dims as u32,
        },
    )
}

/// Cascaded resolution along the footprint axis for a base texture size.
pub fn lod_resolution_for(base_resolution: usize) -> usize {
    if base_resolution <= 1024 {
        8
    } else {
        12
    }
}

pub fn solve_layout_sampler(base_resolution: usize, k: usize, e: f64, rho: f64) -> Result<Layout> {
    let b = (base_resolution * base_resolution * k) as u64;
    solve_layout(
        b,
        k,
        e,
        rho,
        ByteModel::Sampler {
            lod_resolution: lod_resolution_for(base_resolution),
        },
    )
}

/// SDF layout (3-D, 3-channel primary; 3-D scalar cascaded) closest to an
/// absolute byte budget.
pub fn solve_layout_sdf(budget_bytes: u64, rho: f64) -> Result<Layout> {
    solve_layout(
        budget_bytes,
        1,
        1.0,
        rho,
        ByteModel::Uniform {
            primary_dims: 3,
            primary_channels: 3,
            cascaded_dims: 3,
        },
    )
}
