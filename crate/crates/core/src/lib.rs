//! Differentiable indirection: cascades of multilinearly interpolated lookup
//! arrays whose cells *and* coordinate mappings are learned by gradient
//! descent.
//!
//! A [`net::DInNetwork`] evaluates one or more primary arrays, concatenates
//! their (bounded) outputs into a coordinate, and looks that coordinate up in
//! a cascaded array. The task modules train such networks for image
//! compression, filtered texture sampling, GGX distribution approximation and
//! truncated signed distance fields.

pub mod error;
pub mod ggx;
pub mod grid;
pub mod image;
pub mod net;
pub mod optim;
pub mod sampler;
pub mod sdf;
pub mod train;

pub use error::{Error, Result};
pub use grid::{GradBuffer, GridArray, Nonlinearity};
