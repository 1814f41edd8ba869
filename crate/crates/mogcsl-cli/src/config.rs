//! Per-command run configurations and the manifest written into every
//! run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use mogcsl::data::FileFormat;
use mogcsl::envs::{DenoiseConfig, NoisyRecsysConfig};
use mogcsl::eval::ReportFormat;
use mogcsl::gbt::GbtConfig;
use mogcsl::goalsel::{CvaeConfig, StatMode};
use mogcsl::policy::{EncoderKind, GoalMode, PolicyConfig};

/// Artifact format versions recorded in every manifest.
pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seeds: Vec<u64>,
    versions: Versions,
}

#[derive(Debug, Serialize)]
struct Versions {
    package: &'static str,
    trajectory_format: u32,
    checkpoint_format: u32,
}

/// Prepares the run directory: creates it if missing, refuses a
/// non-empty directory unless `force` is set.
pub fn prepare_out_dir(out: &Path, force: bool) -> Result<(), CliError> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty (pass --force to reuse)",
                out.display()
            )));
        }
    } else {
        std::fs::create_dir_all(out)?;
    }
    Ok(())
}

/// Writes `manifest.json` capturing the merged config and seeds.
pub fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    seeds: Vec<u64>,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        config,
        seeds,
        versions: Versions {
            package: env!("CARGO_PKG_VERSION"),
            trajectory_format: TRAJECTORY_FORMAT_VERSION,
            checkpoint_format: CHECKPOINT_FORMAT_VERSION,
        },
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail"),
    )?;
    Ok(())
}

/// Loads a JSON config file into any config struct.
pub fn load_config_file<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

/// Which synthetic source `generate` draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateEnv {
    NoisyRecsys,
    Denoise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub env: GenerateEnv,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
    /// Noisy-recsys environment shape.
    pub recsys: NoisyRecsysConfig,
    /// Logging-policy exploration rate.
    pub behavior_epsilon: f64,
    /// Denoise generator knobs.
    pub denoise: DenoiseConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            env: GenerateEnv::NoisyRecsys,
            n: 0,
            seed: 0,
            out: PathBuf::new(),
            force: false,
            recsys: NoisyRecsysConfig::default(),
            behavior_epsilon: 0.2,
            denoise: DenoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RelabelConfig {
    pub input: PathBuf,
    pub format: FileFormat,
    pub out: PathBuf,
    pub force: bool,
    /// Optional session-length filter (inclusive); 0 max means no cap.
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            input: PathBuf::new(),
            format: FileFormat::Jsonl,
            out: PathBuf::new(),
            force: false,
            min_len: 0,
            max_len: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub format: FileFormat,
    pub out: PathBuf,
    pub force: bool,
    pub seed: u64,
    /// Train/valid/test ratios; the split is written next to the
    /// checkpoint so evaluation sees the same held-out data.
    pub split: (f64, f64, f64),
    pub policy: PolicyConfig,
    /// Infer `n_items`/`max_timestep` from the data when zero.
    pub items_override: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data: PathBuf::new(),
            format: FileFormat::Jsonl,
            out: PathBuf::new(),
            force: false,
            seed: 0,
            split: (0.8, 0.1, 0.1),
            policy: PolicyConfig::default(),
            items_override: 0,
        }
    }
}

/// Inference goal strategies (the statistical scaling strategy and the
/// CVAE-based chooser).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalStrategy {
    Stat,
    Cvae,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    /// Held-out trajectories to score.
    pub data: PathBuf,
    pub format: FileFormat,
    /// Training-split statistics (written by `train`).
    pub stats: PathBuf,
    /// One checkpoint per seed; metrics aggregate mean ± std.
    pub checkpoints: Vec<PathBuf>,
    pub out: PathBuf,
    pub force: bool,
    pub seed: u64,
    pub strategy: GoalStrategy,
    /// Statistical strategy: λ and the statistic it scales.
    pub lambda: f64,
    pub stat_mode: StatMode,
    /// CVAE strategy: training data (the train split), candidate count
    /// K, decoder samples per candidate, and CVAE hyperparameters.
    pub train_data: Option<PathBuf>,
    pub k_candidates: usize,
    pub achievable_samples: usize,
    pub cvae: CvaeConfig,
    /// Re-select the goal at every step instead of selecting once at
    /// session start and decrementing by observed rewards.
    pub reselect_each_step: bool,
    /// Tie-break within the Pareto-non-dominated candidate set.
    pub utility: crate::pipeline::UtilityKind,
    pub k_set: Vec<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            data: PathBuf::new(),
            format: FileFormat::Jsonl,
            stats: PathBuf::new(),
            checkpoints: Vec::new(),
            out: PathBuf::new(),
            force: false,
            seed: 0,
            strategy: GoalStrategy::Stat,
            lambda: 1.5,
            stat_mode: StatMode::PerTimestepMean,
            train_data: None,
            k_candidates: 20,
            achievable_samples: 64,
            cvae: CvaeConfig::default(),
            reselect_each_step: false,
            utility: crate::pipeline::UtilityKind::Balanced,
            k_set: vec![5, 10, 20],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub evaluate: EvaluateConfig,
    pub lambdas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            evaluate: EvaluateConfig::default(),
            lambdas: vec![1.0, 1.5, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiseExpConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub force: bool,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    pub budget: GbtConfig,
}

impl Default for DenoiseExpConfig {
    fn default() -> Self {
        DenoiseExpConfig {
            data: PathBuf::new(),
            out: PathBuf::new(),
            force: false,
            n_seeds: 5,
            base_seed: 0,
            train_fraction: 0.1,
            budget: GbtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Optional explicit spec; the three built-in verification specs
    /// run when absent.
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    pub force: bool,
    pub n: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            spec: None,
            out: PathBuf::new(),
            force: false,
            n: 100_000,
            seed: 5,
        }
    }
}

/// Parses "a,b,c" weight lists.
pub fn parse_weights(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad weight {p:?}")))
        })
        .collect()
}

/// Parses "0.8,0.1,0.1" split ratios.
pub fn parse_split(s: &str) -> Result<(f64, f64, f64), CliError> {
    let parts = parse_weights(s)?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "split needs three ratios, got {}",
            parts.len()
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

/// Parses "5,10,20" k lists.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad integer {p:?}")))
        })
        .collect()
}

/// Applies MOPRL scalarization weights to a policy config.
pub fn apply_goal_mode(
    policy: &mut PolicyConfig,
    mode: &str,
    weights: Option<&str>,
) -> Result<(), CliError> {
    match mode {
        "vector" => {
            policy.goal_mode = GoalMode::Vector;
            Ok(())
        }
        "scalar" => {
            let w = weights.ok_or_else(|| {
                CliError::Usage("--goal-mode scalar requires --weights".into())
            })?;
            policy.goal_mode = GoalMode::Scalar {
                weights: parse_weights(w)?,
            };
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown goal mode {other:?} (expected vector or scalar)"
        ))),
    }
}

/// Applies an encoder choice by name.
pub fn apply_encoder(policy: &mut PolicyConfig, encoder: &str) -> Result<(), CliError> {
    match encoder {
        "transformer" => {
            if !matches!(policy.encoder, EncoderKind::Transformer { .. }) {
                policy.encoder = EncoderKind::Transformer {
                    depth: 1,
                    heads: 1,
                    ffn_hidden: 2 * policy.item_embed_dim,
                };
            }
            Ok(())
        }
        "gru" => {
            policy.encoder = EncoderKind::Gru;
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown encoder {other:?} (expected transformer or gru)"
        ))),
    }
}

/// Report format triple written by evaluation commands.
pub const REPORT_FORMATS: [(ReportFormat, &str); 3] = [
    (ReportFormat::Json, "metrics.json"),
    (ReportFormat::Csv, "metrics.csv"),
    (ReportFormat::Markdown, "metrics.md"),
];
