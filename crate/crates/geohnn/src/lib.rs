//! File formats, experiment plumbing and the command line around
//! [`geohnn_core`].

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod report;
pub mod svg;
pub mod verify;

pub use error::{CliError, Result};
