#![allow(dead_code)]

use din_core::grid::{GridArray, Nonlinearity};
use din_core::net::DInNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cell value whose triangle-wave image is at least `margin` away from a kink.
pub fn smooth_cell(rng: &mut impl Rng, margin: f64) -> f64 {
    loop {
        let v: f64 = rng.random_range(-3.0..3.0);
        if (v - v.round()).abs() > margin {
            return v;
        }
    }
}

pub fn random_array(rng: &mut impl Rng, dims: usize, channels: usize, nl: Nonlinearity) -> GridArray<f64> {
    let shape: Vec<usize> = (0..dims).map(|_| rng.random_range(2..=6)).collect();
    let len = shape.iter().product::<usize>() * channels;
    let cells = (0..len).map(|_| smooth_cell(rng, 1e-3)).collect();
    GridArray::from_cells(&shape, channels, nl, cells).unwrap()
}

/// Interior coordinate whose fractional cell position stays away from cell
/// faces, where the interpolant has kinks.
pub fn interior_query(rng: &mut impl Rng, shape: &[usize]) -> Vec<f64> {
    shape
        .iter()
        .map(|&n| {
            let cells = (n - 1) as f64;
            let i = rng.random_range(0..n - 1) as f64;
            (i + rng.random_range(0.05..0.95)) / cells
        })
        .collect()
}

/// Straightforward recursive multilinear interpolation, written independently
/// of the library: lerp along the first axis between the two sub-grids.
pub fn oracle_interp(shape: &[usize], channels: usize, cells: &[f64], nl: Nonlinearity, x: &[f64]) -> Vec<f64> {
    fn rec(shape: &[usize], channels: usize, cells: &[f64], nl: Nonlinearity, x: &[f64], ch: usize) -> f64 {
        if shape.is_empty() {
            return nl.apply(cells[ch]);
        }
        let n = shape[0];
        let stride: usize = shape[1..].iter().product::<usize>() * channels;
        let u = x[0].clamp(0.0, 1.0) * (n - 1) as f64;
        let i0 = (u.floor() as usize).min(n - 2);
        let f = u - i0 as f64;
        let a = rec(&shape[1..], channels, &cells[i0 * stride..(i0 + 1) * stride], nl, &x[1..], ch);
        let b = rec(&shape[1..], channels, &cells[(i0 + 1) * stride..(i0 + 2) * stride], nl, &x[1..], ch);
        a * (1.0 - f) + b * f
    }
    (0..channels).map(|ch| rec(shape, channels, cells, nl, x, ch)).collect()
}

/// Relative-error check with an absolute floor for tiny analytic values.
pub fn grad_close(analytic: f64, fd: f64) -> bool {
    if analytic.abs() < 1e-3 {
        (analytic - fd).abs() <= 1e-8 || (analytic - fd).abs() <= 1e-5 * analytic.abs().max(fd.abs())
    } else {
        (analytic - fd).abs() <= 1e-5 * analytic.abs().max(fd.abs())
    }
}

/// Central-difference derivative of `f` at `x` along every component.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            xp[j] = x[j] + FD_STEP;
            let a = f(&xp);
            xp[j] = x[j] - FD_STEP;
            let b = f(&xp);
            xp[j] = x[j];
            (a - b) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn nonlinearities() -> [Nonlinearity; 3] {
    [Nonlinearity::None, Nonlinearity::Triangle, Nonlinearity::Sine(1.0)]
}

/// Loss `sum_c w_c * out_c` of a network, for finite differencing.
pub fn weighted_output(net: &DInNetwork<f64>, inputs: &[&[f64]], w: &[f64]) -> f64 {
    net.forward(inputs).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Reads a binary PPM (P6, maxval 255) without going through the library.
pub fn read_ppm_raw(path: &std::path::Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let text_end = {
        let mut fields = 0;
        let mut i = 0;
        while fields < 4 {
            while bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            while !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            fields += 1;
        }
        i + 1
    };
    let header = std::str::from_utf8(&bytes[..text_end]).unwrap();
    let f: Vec<&str> = header.split_whitespace().collect();
    (f[1].parse().unwrap(), f[2].parse().unwrap(), bytes[text_end..].to_vec())
}
