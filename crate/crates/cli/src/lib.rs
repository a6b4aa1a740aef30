//! Command-line layer over `bolza-core`: problem files, run reports, grid
//! CSV files and the four commands.

pub mod canonical;
pub mod commands;
pub mod gridio;
pub mod report;
pub mod schema;
pub mod svg;

pub use commands::{
    cmd_converge, cmd_example51, cmd_solve, cmd_verify, CmdError, ConvergeOptions, Example51Options, Outcome,
    SolveOptions, VerifyCmdOptions,
};
