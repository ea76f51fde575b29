//! Primary/cascaded composition, the byte-budget layout solver and the model
//! file format.

mod format;
mod layout;
mod network;

pub use format::{load, read_model, save, write_model, MAGIC, VERSION};
pub use layout::{
    lod_resolution_for, solve_layout, solve_layout_image, solve_layout_sampler, solve_layout_sdf, ByteModel,
    Layout,
};
pub use network::{DInNetwork, NetGrads, QuantizeTargets, Wire, Workspace};
