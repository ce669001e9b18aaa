//! Command-line front end: file formats, run configuration and experiment drivers.

pub mod config;
pub mod error;
pub mod experiment;
pub mod libsvm;
pub mod output;
pub mod pgm;

pub use config::{MetricKind, RunConfig, Task};
pub use error::{CliError, Result};
pub use experiment::{run_task, Outcome};
