//! Batch front end for `cuemwf-core`: config files, WAV input and output,
//! and the `process`, `sweep`, `calibrate` and `phase-pdf` commands.

pub mod audio;
pub mod config;
mod error;
pub mod output;
pub mod pipeline;

pub use error::{CliError, Result};
