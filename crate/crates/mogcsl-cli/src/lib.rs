//! Library backing the `mogcsl` binary: run configurations, command
//! implementations, and the experiment pipeline glue.
//!
//! Every command writes its outputs under a run directory together with
//! a `manifest.json` capturing the full merged configuration, the seeds,
//! and artifact format versions. Config files are JSON with the same
//! shape as the per-command config structs; command-line flags override
//! config-file values.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::{
    cmd_denoise_exp, cmd_evaluate, cmd_generate, cmd_relabel, cmd_sweep_lambda, cmd_train,
    cmd_verify_theorem1,
};
pub use config::{
    DenoiseExpConfig, EvaluateConfig, GenerateConfig, GoalStrategy, RelabelConfig, SweepConfig,
    TrainConfig, VerifyConfig,
};
pub use error::CliError;
