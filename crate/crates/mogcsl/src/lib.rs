//! Multi-objective goal-conditioned supervised learning (MOGCSL).
//!
//! This crate implements the full MOGCSL pipeline over offline sequential
//! data with vector-valued rewards:
//!
//! - [`data`]: trajectory data model, file ingestion, goal relabeling,
//!   dataset statistics and splitting.
//! - [`envs`]: synthetic data sources — a finite tabular multi-objective
//!   MDP simulator with exact trajectory enumeration, plus the denoising
//!   benchmark generator.
//! - [`nn`]: a small f64 reverse-mode autodiff engine with the layers the
//!   models need (embeddings, self-attention, GRU, layer norm) and Adam.
//! - [`policy`]: the goal-conditioned next-action model, its training
//!   loop, and the scalarized-goal baseline (MOPRL).
//! - [`goalsel`]: inference-time goal selection — the statistical scaling
//!   strategy and the CVAE-based chooser with Pareto selection.
//! - [`gbt`]: multiclass gradient-boosted trees used by the denoising
//!   comparison.
//! - [`eval`]: per-objective HR@k / NDCG@k, the three-variant denoising
//!   comparison, and report emission.
//! - [`oracle`]: verification that the achieved-goal distribution is
//!   determined by the initial state, input goal, and policy, by exact
//!   enumeration vs Monte-Carlo simulation.

pub mod data;
pub mod envs;
pub mod eval;
pub mod gbt;
pub mod goalsel;
pub mod nn;
pub mod oracle;
pub mod policy;

pub use data::{DatasetStats, GoalVector, RelabeledStep, Step, Trajectory};
pub use envs::{DenoiseSample, MomdpSpec, SessionPolicy, StepContext};
pub use eval::{EvalCase, MetricsReport};
pub use goalsel::{CvaePair, GoalChoice, StatStrategyConfig};
pub use oracle::GoalDistribution;
pub use policy::{PolicyConfig, PolicyModel, TrainReport};
