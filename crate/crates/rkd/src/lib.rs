//! File formats, configuration, metrics logs and the `rkd` command-line
//! interface on top of [`rkd_core`].

pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod metrics;

pub use error::{Error, FormatError, Result};
