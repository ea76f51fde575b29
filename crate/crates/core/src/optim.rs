//! ADAM, MAE, learning-rate schedules, gradient clipping for primary arrays
//! and the soft-monotonicity regularizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GradBuffer, GridArray, Nonlinearity, Real};

/// Margin applied to the per-cell monotone clipping bounds, which are strict
/// inequalities.
pub const MONOTONE_MARGIN: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheduler {
    #[default]
    None,
    /// `lr * factor^floor(step / every)`.
    StepDecay { factor: f64, every: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Clipping {
    #[default]
    None,
    /// Clamp primary gradients to `±1 / (2 N lr)`.
    Symmetric,
    /// Per-cell bounds that keep 1-D single-channel primaries strictly
    /// monotone under a plain gradient step. Other primaries are left alone.
    Monotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizer {
    pub kappa: f64,
    /// Tolerance `ε <= 0`; `None` means `-1/N` per line.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl Default for Regularizer {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            epsilon: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Mae,
    /// Mean absolute *relative* error, `|p - t| / max(|t|, floor)`.
    Mape { floor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Optimizer steps; `None` lets each task pick its default.
    pub steps: Option<usize>,
    pub seed: u64,
    pub scheduler: Scheduler,
    pub clipping: Clipping,
    pub regularizer: Regularizer,
    /// Fixed number of gradient shards per batch. Shards are reduced in
    /// order, so results do not depend on the worker count.
    pub shards: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1024,
            steps: None,
            seed: 0,
            scheduler: Scheduler::None,
            clipping: Clipping::None,
            regularizer: Regularizer::default(),
            shards: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if !(self.regularizer.kappa >= 0.0) {
            return Err(Error::config("regularizer kappa must be non-negative"));
        }
        if self.regularizer.epsilon.is_some_and(|e| !(e <= 0.0)) {
            return Err(Error::config("regularizer epsilon must be <= 0"));
        }
        if self.batch_size == 0 || self.shards == 0 {
            return Err(Error::config("batch size and shard count must be positive"));
        }
        if let Scheduler::StepDecay { factor, every } = self.scheduler {
            if !(factor > 0.0) || every == 0 {
                return Err(Error::config("step decay needs factor > 0 and every > 0"));
            }
        }
        Ok(())
    }

    pub fn steps_or(&self, default: usize) -> usize {
        self.steps.unwrap_or(default)
    }
}

pub fn lr_schedule(step: usize, config: &TrainConfig) -> f64 {
    match config.scheduler {
        Scheduler::None => config.learning_rate,
        Scheduler::StepDecay { factor, every } => config.learning_rate * factor.powi((step / every) as i32),
    }
}

/// Mean absolute error and its gradient `sign(p - t) / n`.
pub fn mae_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.is_empty() {
        return Err(Error::arg("loss of an empty batch"));
    }
    if pred.len() != target.len() {
        return Err(Error::arg(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = T::lit(pred.len() as f64);
    let mut total = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            total += d.abs();
            sign(d) / n
        })
        .collect();
    Ok((total / n, grad))
}

#[inline]
pub(crate) fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// First and second moments for every trainable array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            first: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn for_arrays(arrays: &[&GridArray<T>]) -> Self {
        let sizes: Vec<usize> = arrays.iter().map(|a| a.cells().len()).collect();
        Self::new(&sizes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected ADAM update of every array, in place.
pub fn adam_step<T: Real>(
    arrays: &mut [&mut GridArray<T>],
    grads: &[&GradBuffer<T>],
    state: &mut AdamState<T>,
    config: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if arrays.len() != grads.len() || arrays.len() != state.first.len() {
        return Err(Error::config(format!(
            "{} arrays, {} gradient buffers, {} moment sets",
            arrays.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for ((a, g), m) in arrays.iter().zip(grads).zip(&state.first) {
        if a.cells().len() != g.as_slice().len() || m.len() != g.as_slice().len() {
            return Err(Error::config("gradient or moment shape does not match its array"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    // Bias corrections folded into the step size and the second moment.
    let step_size = T::lit(lr / (1.0 - b1.powi(t)));
    let inv_c2 = T::lit(1.0 / (1.0 - b2.powi(t)));
    let (b1, b2) = (T::lit(b1), T::lit(b2));
    let (ob1, ob2) = (T::one() - b1, T::one() - b2);
    let eps = T::lit(config.eps);
    for (i, arr) in arrays.iter_mut().enumerate() {
        let moments = state.first[i].iter_mut().zip(state.second[i].iter_mut());
        for ((c, (m, v)), &g) in arr.cells_mut().iter_mut().zip(moments).zip(grads[i].as_slice()) {
            *m = b1 * *m + ob1 * g;
            *v = b2 * *v + ob2 * g * g;
            *c -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Clamps every entry to `±1 / (2 N lr)`.
pub fn clip_symmetric<T: Real>(grad: &mut GradBuffer<T>, resolution: usize, lr: f64) {
    let b = T::lit(1.0 / (2.0 * resolution as f64 * lr));
    for g in grad.as_mut_slice() {
        *g = g.max(-b).min(b);
    }
}

/// Per-cell clipping that keeps a strictly increasing 1-D array strictly
/// increasing under `c <- c - lr * g`. Each interior cell may move at most
/// (just under) half the gap to the neighbour it moves towards, so two
/// neighbours moving towards each other cannot cross. Boundary cells are
/// pinned.
pub fn clip_monotone<T: Real>(grad: &mut GradBuffer<T>, array: &GridArray<T>, lr: f64) -> Result<()> {
    if array.dims() != 1 || array.channels() != 1 {
        return Err(Error::Precondition(format!(
            "monotone clipping needs a 1-D single-channel array, got {:?}x{}",
            array.shape(),
            array.channels()
        )));
    }
    array.check_grad_buffer(grad)?;
    let c = array.cells();
    if let Some(i) = (0..c.len() - 1).find(|&i| !(c[i + 1] > c[i])) {
        return Err(Error::Precondition(format!("cells {i} and {} are not strictly increasing", i + 1)));
    }
    let scale = T::lit(MONOTONE_MARGIN / (2.0 * lr));
    let g = grad.as_mut_slice();
    let n = c.len();
    g[0] = T::zero();
    g[n - 1] = T::zero();
    for i in 1..n - 1 {
        let hi = (c[i] - c[i - 1]) * scale;
        let lo = (c[i] - c[i + 1]) * scale;
        g[i] = g[i].max(lo).min(hi);
    }
    Ok(())
}

/// `(κ/N) Σ ReLU(ε + F(c[i]) - F̂(c[i+1]))` over a 1-D slice, where `F̂` is a
/// detached copy padded with the border value. Accumulates the gradient
/// (which therefore only reaches `c[i]`) into `grad` and returns the value.
pub fn soft_monotonicity<T: Real>(
    cells: &[T],
    nonlinearity: Nonlinearity,
    kappa: f64,
    epsilon: f64,
    grad: &mut [T],
) -> T {
    let n = cells.len();
    if kappa == 0.0 || n == 0 {
        return T::zero();
    }
    let scale = T::lit(kappa / n as f64);
    let eps = T::lit(epsilon);
    let mut total = T::zero();
    for i in 0..n {
        let next = nonlinearity.apply(cells[(i + 1).min(n - 1)]);
        let r = eps + nonlinearity.apply(cells[i]) - next;
        if r > T::zero() {
            total += r;
            grad[i] += scale * nonlinearity.derivative(cells[i]);
        }
    }
    total * scale
}

/// Number of positions where the soft-monotonicity term is active.
pub fn monotonicity_violations<T: Real>(cells: &[T], nonlinearity: Nonlinearity, epsilon: f64) -> usize {
    let eps = T::lit(epsilon);
    cells
        .windows(2)
        .filter(|w| eps + nonlinearity.apply(w[0]) - nonlinearity.apply(w[1]) > T::zero())
        .count()
}

/// Applies [`soft_monotonicity`] along every grid line of a primary array:
/// channel `m` is regularized along axis `m mod d`, the axis its identity
/// ramp increases along.
pub fn soft_monotonicity_grid<T: Real>(array: &GridArray<T>, reg: &Regularizer, grad: &mut GradBuffer<T>) -> T {
    if reg.kappa == 0.0 {
        return T::zero();
    }
    let dims = array.dims();
    let channels = array.channels();
    let shape = array.shape();
    let nl = array.nonlinearity();
    let mut total = T::zero();
    let mut line = Vec::new();
    let mut line_grad = Vec::new();
    for m in 0..channels {
        let axis = m % dims;
        let n = shape[axis];
        let eps = reg.epsilon.unwrap_or(-1.0 / n as f64);
        let stride = array.vertex_index(&unit(dims, axis));
        for start in 0..array.vertex_count() {
            if array.vertex_multi_index(start)[axis] != 0 {
                continue;
            }
            line.clear();
            line.extend((0..n).map(|i| array.cells()[(start + i * stride) * channels + m]));
            line_grad.clear();
            line_grad.resize(n, T::zero());
            total += soft_monotonicity(&line, nl, reg.kappa, eps, &mut line_grad);
            let g = grad.as_mut_slice();
            for (i, v) in line_grad.iter().enumerate() {
                g[(start + i * stride) * channels + m] += *v;
            }
        }
    }
    total
}

fn unit(dims: usize, axis: usize) -> Vec<usize> {
    let mut v = vec![0; dims];
    v[axis] = 1;
    v
}
