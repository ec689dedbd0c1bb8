//! Library side of the `certband` command-line tool: file formats, loss
//! metrics and the command implementations.

pub mod commands;
pub mod error;
pub mod ingest;
pub mod losses;

pub use error::{CliError, CliResult};
