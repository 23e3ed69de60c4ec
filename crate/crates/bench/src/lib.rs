//! Configuration, orchestration and persistence for the `vcsg` command.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod trace_io;

pub use error::{BenchError, Result};
