//! Config-driven train / eval / bench / matrix pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod matrix;
pub mod output;
pub mod pipeline;

pub use commands::{cmd_bench, cmd_eval, cmd_inspect, cmd_train, Overrides, Run};
pub use config::{DatasetSource, LoadedConfig, PipelineConfig};
pub use error::{CliError, Result};
pub use matrix::cmd_matrix;
