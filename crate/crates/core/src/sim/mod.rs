//! Functional and cost simulation of device programs.

pub mod bf16;
pub mod builtins;
pub mod cost;
pub mod exec;

pub use cost::{CostConfigError, CostParams, CostReport};
pub use exec::{execute, BlockedActor, Execution, SimError, SimOptions, SimSession};
