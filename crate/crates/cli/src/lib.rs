//! Experiment runner behind the `dkto` binary.
//!
//! Each subcommand is a plain function here so that sweeps and tests can drive the
//! same code path as the command line.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::RunConfig;
pub use manifest::RunManifest;

use dkto_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit code for an error. Malformed input files count as usage errors.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) | Error::Parse { .. } => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_IO,
    }
}
