//! Library side of the `tbdq` command-line tool.

pub mod cli;
pub mod commands;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod study;

pub use commands::run;
pub use error::{CliError, Result};
