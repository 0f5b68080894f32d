//! File formats, reports and the command line around `blockdrive-core`.

pub mod cli;
pub mod error;
pub mod mapfile;
pub mod report;
pub mod runner;
pub mod svg;
pub mod trace;

pub use error::{CliError, Result};
