//! N-dimensional differentiable lookup arrays.
//!
//! A [`GridArray`] stores `C` channels at every vertex of a regular grid over
//! `[0, 1]^d` (`d <= 4`). Queries are answered by multilinear interpolation of
//! the `2^d` enclosing vertices after passing each cell through the array's
//! [`Nonlinearity`]. The interpolant is differentiable both in its cells and in
//! the query coordinate, which is what allows gradients to flow through a
//! cascade of arrays.
//!
//! Coordinates are vertex-centred: axis `j` maps `x_j` to the continuous index
//! `x_j * (N_j - 1)`, so `x = 0` and `x = 1` land exactly on the first and last
//! vertex.

mod nonlinearity;
mod quantize;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst};

use crate::error::{Error, Result};

pub use nonlinearity::Nonlinearity;
pub use quantize::{QuantRange, Quantization};

pub const MAX_DIMS: usize = 4;
pub(crate) const MAX_CORNERS: usize = 1 << MAX_DIMS;

/// Slack allowed on query coordinates before the debug assertion fires.
/// Out-of-range components are always clamped; this only catches callers that
/// feed unbounded values.
const COORD_DRIFT: f64 = 1e-3;

/// Floating-point storage type of an array. Training uses `f32`; gradient
/// verification instantiates arrays over `f64`.
pub trait Real:
    Float + FloatConst + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + 'static
{
    fn lit(v: f64) -> Self;
    fn to_f64_lossless(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

/// Per-query interpolation footprint: the lowest enclosing vertex and the
/// fractional position inside the cell along every axis.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil<T> {
    base: usize,
    frac: [T; MAX_DIMS],
    /// `false` where the coordinate was clamped; the clamp has zero slope.
    live: [bool; MAX_DIMS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridArray<T = f32> {
    shape: Vec<usize>,
    strides: Vec<usize>,
    corner_offsets: Vec<usize>,
    channels: usize,
    cells: Vec<T>,
    nonlinearity: Nonlinearity,
    quantization: Option<Quantization>,
}

impl<T: Real> GridArray<T> {
    /// Zero-filled array with the given per-axis vertex counts.
    pub fn new(shape: &[usize], channels: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        let len = validate_shape(shape, channels)?;
        Self::from_cells(shape, channels, nonlinearity, vec![T::zero(); len])
    }

    pub fn from_cells(
        shape: &[usize],
        channels: usize,
        nonlinearity: Nonlinearity,
        cells: Vec<T>,
    ) -> Result<Self> {
        let len = validate_shape(shape, channels)?;
        if cells.len() != len {
            return Err(Error::arg(format!(
                "cell storage holds {} values, shape {:?} x {} channels needs {}",
                cells.len(),
                shape,
                channels,
                len
            )));
        }
        let dims = shape.len();
        let mut strides = vec![1usize; dims];
        for j in (0..dims.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * shape[j + 1];
        }
        let corner_offsets = (0..1usize << dims)
            .map(|mask| {
                (0..dims)
                    .filter(|j| mask & (1 << j) != 0)
                    .map(|j| strides[j])
                    .sum()
            })
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            strides,
            corner_offsets,
            channels,
            cells,
            nonlinearity,
            quantization: None,
        })
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn vertex_count(&self) -> usize {
        self.cells.len() / self.channels
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn set_nonlinearity(&mut self, nonlinearity: Nonlinearity) {
        self.nonlinearity = nonlinearity;
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    /// Mutable access to raw cells. Any quantization codes are dropped since
    /// they would no longer describe the cells.
    pub fn cells_mut(&mut self) -> &mut [T] {
        self.quantization = None;
        &mut self.cells
    }

    pub fn quantization(&self) -> Option<&Quantization> {
        self.quantization.as_ref()
    }

    pub fn is_quantized(&self) -> bool {
        self.quantization.is_some()
    }

    /// Flat vertex index of a multi-index.
    pub fn vertex_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims());
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Multi-index of a flat vertex index.
    pub fn vertex_multi_index(&self, mut flat: usize) -> [usize; MAX_DIMS] {
        let mut out = [0; MAX_DIMS];
        for j in 0..self.dims() {
            out[j] = flat / self.strides[j];
            flat %= self.strides[j];
        }
        out
    }

    /// Position of a vertex in `[0, 1]^d`.
    pub fn vertex_position(&self, flat: usize) -> [T; MAX_DIMS] {
        let idx = self.vertex_multi_index(flat);
        let mut out = [T::zero(); MAX_DIMS];
        for j in 0..self.dims() {
            out[j] = T::lit(idx[j] as f64) / T::lit((self.shape[j] - 1) as f64);
        }
        out
    }

    pub fn fill(&mut self, value: T) {
        self.cells_mut().fill(value);
    }

    pub fn fill_channel(&mut self, channel: usize, value: T) {
        let c = self.channels;
        for v in self.cells_mut().iter_mut().skip(channel).step_by(c) {
            *v = value;
        }
    }

    /// Linear "uv-map" initialization: channel `m` ramps along axis `m mod d`,
    /// so interpolating the array is the identity on `[0, 1]^d` for every
    /// group of `d` channels. Exact for the `None` and `Triangle`
    /// nonlinearities, which are the identity on `[0, 1]`.
    pub fn init_identity_ramp(&mut self) {
        let dims = self.dims();
        let channels = self.channels;
        let denom: Vec<T> = self.shape.iter().map(|&n| T::lit((n - 1) as f64)).collect();
        for v in 0..self.vertex_count() {
            let idx = self.vertex_multi_index(v);
            for m in 0..channels {
                let j = m % dims;
                self.cells[v * channels + m] = T::lit(idx[j] as f64) / denom[j];
            }
        }
        self.quantization = None;
    }

    /// Returns an array whose cells hold `F(c)` and whose nonlinearity is
    /// `None`. Because the nonlinearity is applied before interpolation,
    /// every query result is unchanged.
    pub fn bake_nonlinearity(&self) -> GridArray<T> {
        let nl = self.nonlinearity;
        let mut baked = self.clone();
        if nl.is_periodic() {
            for v in baked.cells.iter_mut() {
                *v = nl.apply(*v);
            }
            baked.nonlinearity = Nonlinearity::None;
            baked.quantization = None;
        }
        baked
    }

    pub(crate) fn stencil(&self, x: &[T]) -> Result<Stencil<T>> {
        if x.len() != self.dims() {
            return Err(Error::arg(format!(
                "coordinate has {} components, array has {} dimensions",
                x.len(),
                self.dims()
            )));
        }
        if let Some(j) = x.iter().position(|v| v.is_nan()) {
            return Err(Error::arg(format!("NaN coordinate on axis {j}")));
        }
        Ok(self.stencil_unchecked(x))
    }

    #[inline]
    pub(crate) fn stencil_unchecked(&self, x: &[T]) -> Stencil<T> {
        let mut st = Stencil {
            base: 0,
            frac: [T::zero(); MAX_DIMS],
            live: [true; MAX_DIMS],
        };
        for (j, &xj) in x.iter().enumerate() {
            debug_assert!(
                xj >= T::lit(-COORD_DRIFT) && xj <= T::lit(1.0 + COORD_DRIFT),
                "coordinate {xj:?} on axis {j} is outside [0, 1]"
            );
            let clamped = xj.max(T::zero()).min(T::one());
            st.live[j] = clamped == xj;
            let last = self.shape[j] - 1;
            let u = clamped * T::lit(last as f64);
            let i0 = u.floor().to_usize().unwrap_or(0).min(last - 1);
            st.frac[j] = u - T::lit(i0 as f64);
            st.base += i0 * self.strides[j];
        }
        st
    }

    #[inline]
    fn corner_weights(&self, st: &Stencil<T>, w: &mut [T; MAX_CORNERS]) {
        w[0] = T::one();
        for j in 0..self.dims() {
            let f = st.frac[j];
            let g = T::one() - f;
            let half = 1 << j;
            for m in 0..half {
                let a = w[m];
                w[m + half] = a * f;
                w[m] = a * g;
            }
        }
    }

    /// Multilinear weights of the `2^d` enclosing vertices; corner bit `j`
    /// selects the upper vertex on axis `j`.
    pub fn weights(&self, x: &[T]) -> Result<Vec<T>> {
        let st = self.stencil(x)?;
        let mut w = [T::zero(); MAX_CORNERS];
        self.corner_weights(&st, &mut w);
        Ok(w[..1 << self.dims()].to_vec())
    }

    #[inline]
    pub(crate) fn eval_stencil(&self, st: &Stencil<T>, out: &mut [T]) {
        let mut w = [T::zero(); MAX_CORNERS];
        self.corner_weights(st, &mut w);
        let c = self.channels;
        let nl = self.nonlinearity;
        out[..c].fill(T::zero());
        for (m, &off) in self.corner_offsets.iter().enumerate() {
            let base = (st.base + off) * c;
            let wm = w[m];
            for (o, &cell) in out[..c].iter_mut().zip(&self.cells[base..base + c]) {
                *o += wm * nl.apply(cell);
            }
        }
    }

    /// Interpolated, post-nonlinearity value at `x`.
    pub fn interpolate(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.channels];
        self.interpolate_into(x, &mut out)?;
        Ok(out)
    }

    pub fn interpolate_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        if out.len() != self.channels {
            return Err(Error::arg(format!(
                "output buffer holds {} values, array has {} channels",
                out.len(),
                self.channels
            )));
        }
        let st = self.stencil(x)?;
        self.eval_stencil(&st, out);
        Ok(())
    }

    /// `sum_c upstream[c] * d o_c / d x_j` for each axis `j`, given
    /// `s[m] = sum_c upstream[c] * F(cell[m][c])` per corner.
    #[inline]
    fn coord_vjp(&self, st: &Stencil<T>, s: &[T; MAX_CORNERS], out: &mut [T]) {
        let dims = self.dims();
        for j in 0..dims {
            if !st.live[j] {
                out[j] = T::zero();
                continue;
            }
            let bit = 1 << j;
            let mut acc = T::zero();
            for m in (0..1usize << dims).filter(|m| m & bit != 0) {
                let mut w = T::one();
                for k in (0..dims).filter(|&k| k != j) {
                    w = w * if m & (1 << k) != 0 {
                        st.frac[k]
                    } else {
                        T::one() - st.frac[k]
                    };
                }
                acc += w * (s[m] - s[m ^ bit]);
            }
            out[j] = acc * T::lit((self.shape[j] - 1) as f64);
        }
    }

    /// Jacobian `d o_c / d x_j` of the interpolated output, including the
    /// `(N_j - 1)` scale of the coordinate mapping. Clamped components have a
    /// zero column.
    pub fn grad_coords(&self, x: &[T]) -> Result<Jacobian<T>> {
        let st = self.stencil(x)?;
        let (c, d) = (self.channels, self.dims());
        let nl = self.nonlinearity;
        let mut data = vec![T::zero(); c * d];
        let mut s = [T::zero(); MAX_CORNERS];
        for ch in 0..c {
            for (m, &off) in self.corner_offsets.iter().enumerate() {
                s[m] = nl.apply(self.cells[(st.base + off) * c + ch]);
            }
            self.coord_vjp(&st, &s, &mut data[ch * d..(ch + 1) * d]);
        }
        Ok(Jacobian {
            rows: c,
            cols: d,
            data,
        })
    }

    /// Accumulates `alpha_i * F'(c[i]) * upstream` into the touched cells of
    /// `out`.
    pub fn grad_cells(&self, x: &[T], upstream: &[T], out: &mut GradBuffer<T>) -> Result<()> {
        self.check_grad_buffer(out)?;
        if upstream.len() != self.channels {
            return Err(Error::arg(format!(
                "upstream has {} values, array has {} channels",
                upstream.len(),
                self.channels
            )));
        }
        let st = self.stencil(x)?;
        self.backward_stencil(&st, upstream, Some(&mut out.data), None);
        Ok(())
    }

    pub(crate) fn check_grad_buffer(&self, g: &GradBuffer<T>) -> Result<()> {
        if g.shape != self.shape || g.channels != self.channels {
            return Err(Error::arg(format!(
                "gradient buffer {:?}x{} does not match array {:?}x{}",
                g.shape, g.channels, self.shape, self.channels
            )));
        }
        Ok(())
    }

    /// Backward pass of one query: cell gradients (accumulated) and the
    /// vector-Jacobian product with respect to the coordinate (overwritten).
    #[inline]
    pub(crate) fn backward_stencil(
        &self,
        st: &Stencil<T>,
        upstream: &[T],
        cell_grad: Option<&mut [T]>,
        coord_grad: Option<&mut [T]>,
    ) {
        let c = self.channels;
        let nl = self.nonlinearity;
        if let Some(grad) = cell_grad {
            let mut w = [T::zero(); MAX_CORNERS];
            self.corner_weights(st, &mut w);
            for (m, &off) in self.corner_offsets.iter().enumerate() {
                let base = (st.base + off) * c;
                let wm = w[m];
                for ch in 0..c {
                    grad[base + ch] += wm * nl.derivative(self.cells[base + ch]) * upstream[ch];
                }
            }
        }
        if let Some(out) = coord_grad {
            let mut s = [T::zero(); MAX_CORNERS];
            for (m, &off) in self.corner_offsets.iter().enumerate() {
                let base = (st.base + off) * c;
                let mut acc = T::zero();
                for ch in 0..c {
                    acc += upstream[ch] * nl.apply(self.cells[base + ch]);
                }
                s[m] = acc;
            }
            self.coord_vjp(st, &s, out);
        }
    }

    pub fn grad_buffer(&self) -> GradBuffer<T> {
        GradBuffer::zeros(&self.shape, self.channels)
    }
}

fn validate_shape(shape: &[usize], channels: usize) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::arg(format!(
            "arrays have 1..={MAX_DIMS} dimensions, got {}",
            shape.len()
        )));
    }
    if let Some(n) = shape.iter().find(|&&n| n < 2) {
        return Err(Error::arg(format!("every axis needs at least 2 vertices, got {n}")));
    }
    if channels == 0 {
        return Err(Error::arg("arrays need at least one channel"));
    }
    Ok(shape.iter().product::<usize>() * channels)
}

/// Row-major `rows x cols` matrix of partial derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Jacobian<T> {
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }
}

/// Accumulator for `dL/dcell`, laid out exactly like the array's cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer<T = f32> {
    shape: Vec<usize>,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> GradBuffer<T> {
    pub fn zeros(shape: &[usize], channels: usize) -> Self {
        Self {
            shape: shape.to_vec(),
            channels,
            data: vec![T::zero(); shape.iter().product::<usize>() * channels],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn zero(&mut self) {
        self.data.fill(T::zero());
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn add_assign(&mut self, other: &GradBuffer<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }
}
