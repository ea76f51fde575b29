//! Mini-batch training loop shared by all tasks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GradBuffer;
use crate::net::{DInNetwork, Layout, NetGrads, Workspace};
use crate::optim::{
    adam_step, clip_monotone, clip_symmetric, lr_schedule, sign, soft_monotonicity_grid, AdamState, Clipping, Loss,
    TrainConfig,
};

/// Worker threads for sharded gradient evaluation: `DIN_THREADS` if set,
/// otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("DIN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Training samples laid out flat: per primary `len * dims` coordinates and
/// `len * channels` targets.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub inputs: Vec<Vec<f32>>,
    pub targets: Vec<f32>,
    input_dims: Vec<usize>,
    channels: usize,
}

impl Batch {
    pub fn for_network(net: &DInNetwork<f32>) -> Self {
        Self {
            inputs: vec![Vec::new(); net.primaries().len()],
            targets: Vec::new(),
            input_dims: net.primaries().iter().map(|p| p.dims()).collect(),
            channels: net.output_channels(),
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.channels.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn clear(&mut self) {
        self.inputs.iter_mut().for_each(Vec::clear);
        self.targets.clear();
    }

    pub fn push(&mut self, inputs: &[&[f32]], target: &[f32]) {
        debug_assert_eq!(inputs.len(), self.inputs.len());
        debug_assert_eq!(target.len(), self.channels);
        for ((buf, x), &d) in self.inputs.iter_mut().zip(inputs).zip(&self.input_dims) {
            debug_assert_eq!(x.len(), d);
            buf.extend_from_slice(x);
        }
        self.targets.extend_from_slice(target);
    }

    fn check(&self, net: &DInNetwork<f32>) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::arg("empty batch"));
        }
        if self.inputs.len() != net.primaries().len() {
            return Err(Error::config("batch inputs do not match the network's primaries"));
        }
        for (buf, p) in self.inputs.iter().zip(net.primaries()) {
            if buf.len() != n * p.dims() {
                return Err(Error::config("batch input length does not match its primary"));
            }
            if buf.iter().any(|v| v.is_nan()) {
                return Err(Error::arg("NaN coordinate in batch"));
            }
        }
        Ok(())
    }

    pub fn sample_inputs<'a>(&'a self, s: usize, out: &mut Vec<&'a [f32]>) {
        out.clear();
        for (buf, &d) in self.inputs.iter().zip(&self.input_dims) {
            out.push(&buf[s * d..(s + 1) * d]);
        }
    }
}

/// Runs forward + backward over `range` of the batch, accumulating into
/// `grads`; returns the summed (un-normalized) loss.
fn accumulate(
    net: &DInNetwork<f32>,
    batch: &Batch,
    range: std::ops::Range<usize>,
    loss: Loss,
    inv_n: f32,
    ws: &mut Workspace<f32>,
    grads: &mut NetGrads<f32>,
) -> f64 {
    let k = net.output_channels();
    let mut upstream = vec![0.0f32; k];
    let mut xs: Vec<&[f32]> = Vec::with_capacity(batch.inputs.len());
    let mut total = 0.0f64;
    for s in range {
        batch.sample_inputs(s, &mut xs);
        let pred = net.forward_with(&xs, ws);
        let target = &batch.targets[s * k..(s + 1) * k];
        for ch in 0..k {
            let d = pred[ch] - target[ch];
            let w = match loss {
                Loss::Mae => 1.0,
                Loss::Mape { floor } => 1.0 / target[ch].abs().max(floor as f32),
            };
            total += (d.abs() * w) as f64;
            upstream[ch] = sign(d) * w * inv_n;
        }
        net.backward_with(ws, &upstream, grads);
    }
    total
}

/// Result of a task's training run.
#[derive(Clone, Debug)]
pub struct Trained {
    pub network: DInNetwork<f32>,
    /// Resolved layout, for tasks sized by a byte budget.
    pub layout: Option<Layout>,
    /// Loss of the last step.
    pub final_loss: f64,
    pub steps: usize,
}

pub struct Trainer {
    net: DInNetwork<f32>,
    config: TrainConfig,
    loss: Loss,
    adam: AdamState<f32>,
    grads: NetGrads<f32>,
    shard_grads: Vec<NetGrads<f32>>,
    workspaces: Vec<Workspace<f32>>,
    pool: Option<rayon::ThreadPool>,
    step: usize,
}

impl Trainer {
    pub fn new(net: DInNetwork<f32>, config: TrainConfig, loss: Loss) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::for_arrays(&net.arrays());
        let grads = net.grads();
        let shards = config.shards;
        let shard_grads = if shards > 1 {
            (0..shards).map(|_| net.grads()).collect()
        } else {
            Vec::new()
        };
        let workspaces = (0..shards).map(|_| net.workspace()).collect();
        let pool = if shards > 1 {
            let threads = worker_threads().min(shards);
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            net,
            config,
            loss,
            adam,
            grads,
            shard_grads,
            workspaces,
            pool,
            step: 0,
        })
    }

    pub fn network(&self) -> &DInNetwork<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut DInNetwork<f32> {
        &mut self.net
    }

    pub fn into_network(self) -> DInNetwork<f32> {
        self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Gradients of the most recent step (after clipping and regularization).
    pub fn last_grads(&self) -> &NetGrads<f32> {
        &self.grads
    }

    /// One optimizer step on `batch`; returns the batch loss (mean over
    /// samples and channels, plus any regularizer value).
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        batch.check(&self.net)?;
        let n = batch.len();
        let inv_n = 1.0 / (n * self.net.output_channels()) as f32;
        self.grads.zero();
        let mut total = if let Some(pool) = &self.pool {
            let shards = self.shard_grads.len();
            let chunk = n.div_ceil(shards);
            let net = &self.net;
            let loss = self.loss;
            let partial: Vec<f64> = pool.install(|| {
                self.shard_grads
                    .par_iter_mut()
                    .zip(self.workspaces.par_iter_mut())
                    .enumerate()
                    .map(|(i, (g, ws))| {
                        g.zero();
                        let lo = (i * chunk).min(n);
                        let hi = ((i + 1) * chunk).min(n);
                        accumulate(net, batch, lo..hi, loss, inv_n, ws, g)
                    })
                    .collect()
            });
            for g in &self.shard_grads {
                self.grads.add_assign(g);
            }
            partial.into_iter().sum::<f64>()
        } else {
            accumulate(&self.net, batch, 0..n, self.loss, inv_n, &mut self.workspaces[0], &mut self.grads)
        };
        total *= inv_n as f64;

        let lr = lr_schedule(self.step, &self.config);
        for (p, g) in self.net.primaries().iter().zip(self.grads.primaries.iter_mut()) {
            match self.config.clipping {
                Clipping::None => {}
                Clipping::Symmetric => {
                    let res = p.shape().iter().copied().max().unwrap_or(2);
                    clip_symmetric(g, res, lr);
                }
                Clipping::Monotone => {
                    if p.dims() == 1 && p.channels() == 1 {
                        clip_monotone(g, p, lr)?;
                    }
                }
            }
            if self.config.regularizer.kappa > 0.0 {
                total += soft_monotonicity_grid(p, &self.config.regularizer, g) as f64;
            }
        }

        let grads: Vec<&GradBuffer<f32>> = self
            .grads
            .primaries
            .iter()
            .chain(std::iter::once(&self.grads.cascaded))
            .collect();
        adam_step(&mut self.net.arrays_mut(), &grads, &mut self.adam, &self.config, lr)?;
        self.step += 1;
        Ok(total)
    }
}
