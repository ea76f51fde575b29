use crate::error::{Error, Result};
use crate::grid::{GradBuffer, GridArray, Real, Stencil, MAX_DIMS};

/// Source of one cascaded coordinate axis: output `channel` of primary
/// `primary`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wire {
    pub primary: usize,
    pub channel: usize,
}

/// A set of primary arrays whose outputs, routed through `wiring`, form the
/// coordinate of a single cascaded array.
#[derive(Clone, Debug, PartialEq)]
pub struct DInNetwork<T = f32> {
    primaries: Vec<GridArray<T>>,
    cascaded: GridArray<T>,
    wiring: Vec<Wire>,
    /// Per primary, the cascaded axis fed by each of its channels.
    axis_of: Vec<Vec<usize>>,
}

/// Gradient buffers for every array of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads<T = f32> {
    pub primaries: Vec<GradBuffer<T>>,
    pub cascaded: GradBuffer<T>,
}

impl<T: Real> NetGrads<T> {
    pub fn zero(&mut self) {
        self.primaries.iter_mut().for_each(GradBuffer::zero);
        self.cascaded.zero();
    }

    pub fn add_assign(&mut self, other: &NetGrads<T>) {
        for (a, b) in self.primaries.iter_mut().zip(&other.primaries) {
            a.add_assign(b);
        }
        self.cascaded.add_assign(&other.cascaded);
    }

    pub fn is_zero(&self) -> bool {
        self.primaries.iter().all(GradBuffer::is_zero) && self.cascaded.is_zero()
    }
}

/// Scratch space holding the intermediates of one forward pass, reused by the
/// matching backward pass.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    primary_stencils: Vec<Stencil<T>>,
    primary_out: Vec<Vec<T>>,
    primary_upstream: Vec<Vec<T>>,
    coord: Vec<T>,
    cascaded_stencil: Option<Stencil<T>>,
    coord_grad: [T; MAX_DIMS],
    output: Vec<T>,
}

/// Which arrays [`DInNetwork::quantize8`] converts to 8-bit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantizeTargets {
    pub primaries: bool,
    pub cascaded: bool,
}

impl QuantizeTargets {
    pub const ALL: QuantizeTargets = QuantizeTargets {
        primaries: true,
        cascaded: true,
    };
}

impl<T: Real> DInNetwork<T> {
    pub fn new(primaries: Vec<GridArray<T>>, cascaded: GridArray<T>, wiring: Vec<Wire>) -> Result<Self> {
        if primaries.is_empty() {
            return Err(Error::config("a network needs at least one primary array"));
        }
        if wiring.len() != cascaded.dims() {
            return Err(Error::config(format!(
                "wiring feeds {} axes, cascaded array has {} dimensions",
                wiring.len(),
                cascaded.dims()
            )));
        }
        let mut axis_of: Vec<Vec<Option<usize>>> =
            primaries.iter().map(|p| vec![None; p.channels()]).collect();
        for (axis, w) in wiring.iter().enumerate() {
            let slot = axis_of
                .get_mut(w.primary)
                .and_then(|chans| chans.get_mut(w.channel))
                .ok_or_else(|| {
                    Error::config(format!(
                        "axis {axis} wired to missing primary {} channel {}",
                        w.primary, w.channel
                    ))
                })?;
            if slot.is_some() {
                return Err(Error::config(format!(
                    "primary {} channel {} is wired twice",
                    w.primary, w.channel
                )));
            }
            *slot = Some(axis);
        }
        let axis_of = axis_of
            .into_iter()
            .enumerate()
            .map(|(p, chans)| {
                chans
                    .into_iter()
                    .enumerate()
                    .map(|(c, a)| a.ok_or_else(|| Error::config(format!("primary {p} channel {c} is not wired"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (p, arr) in primaries.iter().enumerate() {
            let bounded = arr.nonlinearity().is_periodic()
                || arr.cells().iter().all(|v| *v >= T::zero() && *v <= T::one());
            if !bounded {
                return Err(Error::config(format!(
                    "primary {p} has no periodic nonlinearity and unbounded cells"
                )));
            }
        }
        Ok(Self {
            primaries,
            cascaded,
            wiring,
            axis_of,
        })
    }

    /// Wires the primaries' channels, in order, to consecutive cascaded axes.
    pub fn concatenated(primaries: Vec<GridArray<T>>, cascaded: GridArray<T>) -> Result<Self> {
        let wiring = primaries
            .iter()
            .enumerate()
            .flat_map(|(p, a)| (0..a.channels()).map(move |channel| Wire { primary: p, channel }))
            .collect();
        Self::new(primaries, cascaded, wiring)
    }

    pub fn primaries(&self) -> &[GridArray<T>] {
        &self.primaries
    }

    pub fn cascaded(&self) -> &GridArray<T> {
        &self.cascaded
    }

    pub fn wiring(&self) -> &[Wire] {
        &self.wiring
    }

    pub fn output_channels(&self) -> usize {
        self.cascaded.channels()
    }

    /// Mutable access to all arrays, primaries first and the cascaded last.
    /// Callers must keep primary outputs bounded.
    pub fn arrays_mut(&mut self) -> Vec<&mut GridArray<T>> {
        let mut v: Vec<&mut GridArray<T>> = self.primaries.iter_mut().collect();
        v.push(&mut self.cascaded);
        v
    }

    pub fn arrays(&self) -> Vec<&GridArray<T>> {
        let mut v: Vec<&GridArray<T>> = self.primaries.iter().collect();
        v.push(&self.cascaded);
        v
    }

    pub fn primary_mut(&mut self, index: usize) -> &mut GridArray<T> {
        &mut self.primaries[index]
    }

    pub fn cascaded_mut(&mut self) -> &mut GridArray<T> {
        &mut self.cascaded
    }

    pub fn grads(&self) -> NetGrads<T> {
        NetGrads {
            primaries: self.primaries.iter().map(GridArray::grad_buffer).collect(),
            cascaded: self.cascaded.grad_buffer(),
        }
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace {
            primary_stencils: Vec::with_capacity(self.primaries.len()),
            primary_out: self.primaries.iter().map(|p| vec![T::zero(); p.channels()]).collect(),
            primary_upstream: self.primaries.iter().map(|p| vec![T::zero(); p.channels()]).collect(),
            coord: vec![T::zero(); self.cascaded.dims()],
            cascaded_stencil: None,
            coord_grad: [T::zero(); MAX_DIMS],
            output: vec![T::zero(); self.cascaded.channels()],
        }
    }

    fn check_inputs(&self, inputs: &[&[T]]) -> Result<()> {
        if inputs.len() != self.primaries.len() {
            return Err(Error::config(format!(
                "{} coordinate vectors supplied for {} primary arrays",
                inputs.len(),
                self.primaries.len()
            )));
        }
        for (p, (arr, x)) in self.primaries.iter().zip(inputs).enumerate() {
            arr.stencil(x)
                .map_err(|e| Error::config(format!("input to primary {p}: {e}")))?;
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &[&[T]]) -> Result<Vec<T>> {
        self.check_inputs(inputs)?;
        let mut ws = self.workspace();
        Ok(self.forward_with(inputs, &mut ws).to_vec())
    }

    /// Accumulates `dL/dcell` for every array given `upstream = dL/doutput`.
    pub fn backward(&self, inputs: &[&[T]], upstream: &[T], grads: &mut NetGrads<T>) -> Result<()> {
        self.check_inputs(inputs)?;
        if upstream.len() != self.output_channels() {
            return Err(Error::config(format!(
                "upstream has {} values, network outputs {}",
                upstream.len(),
                self.output_channels()
            )));
        }
        self.check_grads(grads)?;
        let mut ws = self.workspace();
        self.forward_with(inputs, &mut ws);
        self.backward_with(&mut ws, upstream, grads);
        Ok(())
    }

    pub(crate) fn check_grads(&self, grads: &NetGrads<T>) -> Result<()> {
        if grads.primaries.len() != self.primaries.len() {
            return Err(Error::config("gradient set does not match the network"));
        }
        for (a, g) in self.primaries.iter().zip(&grads.primaries) {
            a.check_grad_buffer(g)?;
        }
        self.cascaded.check_grad_buffer(&grads.cascaded)
    }

    /// Unchecked forward pass; inputs must already be validated.
    #[inline]
    pub fn forward_with<'w>(&self, inputs: &[&[T]], ws: &'w mut Workspace<T>) -> &'w [T] {
        ws.primary_stencils.clear();
        for (p, arr) in self.primaries.iter().enumerate() {
            let st = arr.stencil_unchecked(inputs[p]);
            arr.eval_stencil(&st, &mut ws.primary_out[p]);
            ws.primary_stencils.push(st);
            for (ch, &axis) in self.axis_of[p].iter().enumerate() {
                ws.coord[axis] = ws.primary_out[p][ch];
            }
        }
        let st = self.cascaded.stencil_unchecked(&ws.coord);
        self.cascaded.eval_stencil(&st, &mut ws.output);
        ws.cascaded_stencil = Some(st);
        &ws.output
    }

    /// Backward pass for the query last evaluated by
    /// [`forward_with`](Self::forward_with) on the same workspace.
    #[inline]
    pub fn backward_with(&self, ws: &mut Workspace<T>, upstream: &[T], grads: &mut NetGrads<T>) {
        let st = ws.cascaded_stencil.expect("backward_with called before forward_with");
        let dims = self.cascaded.dims();
        self.cascaded.backward_stencil(
            &st,
            upstream,
            Some(grads.cascaded.as_mut_slice()),
            Some(&mut ws.coord_grad[..dims]),
        );
        for (p, arr) in self.primaries.iter().enumerate() {
            for (ch, &axis) in self.axis_of[p].iter().enumerate() {
                ws.primary_upstream[p][ch] = ws.coord_grad[axis];
            }
            arr.backward_stencil(
                &ws.primary_stencils[p],
                &ws.primary_upstream[p],
                Some(grads.primaries[p].as_mut_slice()),
                None,
            );
        }
    }
}

impl DInNetwork<f32> {
    /// 8-bit copy of the network. Primaries are baked and coded on `[0, 1]`;
    /// the cascaded array uses a per-channel range unless it is periodic.
    pub fn quantize8(&self, targets: QuantizeTargets) -> DInNetwork<f32> {
        let primaries = self
            .primaries
            .iter()
            .map(|p| if targets.primaries { p.quantize8() } else { p.clone() })
            .collect();
        let cascaded = if targets.cascaded {
            self.cascaded.quantize8()
        } else {
            self.cascaded.clone()
        };
        DInNetwork::new(primaries, cascaded, self.wiring.clone()).expect("wiring unchanged")
    }

    /// Total stored bytes at one byte per value.
    pub fn byte_size(&self) -> u64 {
        self.arrays().iter().map(|a| a.cells().len() as u64).sum()
    }
}
