//! Command-line driver: compile modules into artifact directories and run
//! them on the simulator or the CPU path.

pub mod commands;
pub mod datafile;
pub mod report;

pub use commands::{cmd_compile, cmd_run, CliError, CompileOptions, InputSource, RunOptions, RunOutcome};
pub use report::{OpRecord, RunReport};
