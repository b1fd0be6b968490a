//! Offload compiler, host runtime and tile-array simulator for linear-algebra
//! kernels on an AIE-ML style NPU.

pub mod categorize;
pub mod data;
pub mod device;
pub mod host;
pub mod ir;
pub mod kernels;
pub mod pipeline;
pub mod reference;
pub mod runtime;
pub mod scalar;
pub mod sim;
pub mod text;
