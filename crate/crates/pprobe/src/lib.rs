//! File formats, sweep execution and reporting on top of [`pprobe_core`].

pub mod checkpoint;
pub mod config;
pub mod corpus;
mod error;
pub mod output;
pub mod report;
pub mod runner;
pub mod svg;

pub use error::{Error, Result};
pub use pprobe_core as core;
