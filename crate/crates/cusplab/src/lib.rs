//! File formats, configuration and the batch pipeline around `cusplab-core`.

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{parse_config, serialize_config, ConfigError, RunConfig};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutcome, Stage};
