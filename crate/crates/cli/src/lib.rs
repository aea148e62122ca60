//! Staged experiment runner: sample → generate → simulate → evaluate → report.
//!
//! Each stage writes its artifacts under `<output_dir>/<name>/` together with
//! a manifest of content digests, and refuses to run on stale upstream
//! artifacts. Generate and simulate journal finished items so an interrupted
//! run resumes where it stopped.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod stages;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use evaluate::{cmd_evaluate, cmd_report};
pub use stages::{cmd_generate, cmd_sample, cmd_simulate, cmd_validate, StageSummary};
