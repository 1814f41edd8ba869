//! Generator for the denoising benchmark.
//!
//! Each sample pairs a 50-dimensional standard-normal state with a
//! 5-dimensional standard-normal goal. The ground-truth action counts the
//! strictly positive state coordinates (shifted by +1 so identifiers stay
//! in `[1, n_noise]`). The observed label equals the ground truth when
//! every goal component exceeds the noise threshold, and is uniformly
//! random otherwise — so only a model that sees the whole goal vector can
//! tell noisy samples apart.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use super::EnvError;

/// State dimensionality of the construction.
pub const STATE_DIM: usize = 50;
/// Goal dimensionality of the construction.
pub const GOAL_DIM: usize = 5;

/// Knobs the construction leaves open.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// Size of the label space for the uniformly random noisy labels.
    /// Defaults to 51 so the label space exactly covers the shifted clean
    /// labels 1..=51.
    pub n_noise: u32,
    /// A sample is clean iff every goal component is strictly greater
    /// than this threshold. `f64::NEG_INFINITY` makes every sample clean.
    pub noise_threshold: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            n_noise: (STATE_DIM + 1) as u32,
            noise_threshold: -1.0,
        }
    }
}

/// One generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSample {
    /// 50-dimensional standard-normal state.
    pub state: Vec<f64>,
    /// 5-dimensional standard-normal goal.
    pub goal: Vec<f64>,
    /// Observed (possibly corrupted) action label in `[1, n_noise]`.
    pub label: u32,
    /// Ground-truth action: 1 + the count of strictly positive state
    /// coordinates, so it lies in `[1, 51]`.
    pub clean_label: u32,
}

impl DenoiseSample {
    /// Whether the observed label was left uncorrupted.
    pub fn is_clean(&self) -> bool {
        self.label == self.clean_label
    }
}

/// Generates samples with the default configuration (threshold −1,
/// 51 labels).
pub fn generate_denoise_dataset(n_samples: usize, seed: u64) -> Vec<DenoiseSample> {
    generate_denoise_dataset_with(&DenoiseConfig::default(), n_samples, seed)
}

/// Generates samples with an explicit configuration. Deterministic given
/// the seed.
pub fn generate_denoise_dataset_with(
    config: &DenoiseConfig,
    n_samples: usize,
    seed: u64,
) -> Vec<DenoiseSample> {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let state: Vec<f64> = (0..STATE_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let goal: Vec<f64> = (0..GOAL_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let positives = state.iter().filter(|&&s| s > 0.0).count() as u32;
        let clean_label = positives + 1;
        let clean = goal.iter().all(|&g| g > config.noise_threshold);
        let label = if clean {
            clean_label
        } else {
            rng.random_range(1..=config.n_noise)
        };
        out.push(DenoiseSample {
            state,
            goal,
            label,
            clean_label,
        });
    }
    out
}

/// Writes samples as CSV: `traj_id,t,action,r_1..r_5,s_1..s_50,clean_label`.
///
/// The leading columns mirror the trajectory CSV layout (each sample is a
/// one-step session whose action is the observed label and whose reward
/// columns carry the goal); the state features and the diagnostic
/// `clean_label` column follow.
pub fn save_denoise_csv(path: &Path, samples: &[DenoiseSample]) -> Result<(), EnvError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("traj_id,t,action");
    for i in 1..=GOAL_DIM {
        header.push_str(&format!(",r_{i}"));
    }
    for i in 1..=STATE_DIM {
        header.push_str(&format!(",s_{i}"));
    }
    header.push_str(",clean_label");
    writeln!(w, "{header}")?;
    for (i, sample) in samples.iter().enumerate() {
        let mut row = format!("{i},1,{}", sample.label);
        for g in &sample.goal {
            row.push_str(&format!(",{g}"));
        }
        for s in &sample.state {
            row.push_str(&format!(",{s}"));
        }
        row.push_str(&format!(",{}", sample.clean_label));
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads samples written by [`save_denoise_csv`].
pub fn load_denoise_csv(path: &Path) -> Result<Vec<DenoiseSample>, EnvError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let expected_fields = 3 + GOAL_DIM + STATE_DIM + 1;
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, line)) => {
            let header = line?;
            if header.split(',').count() != expected_fields {
                return Err(EnvError::Parse {
                    line: 1,
                    msg: format!("expected {expected_fields} columns, got {header:?}"),
                });
            }
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(EnvError::Parse {
                line: line_no,
                msg: format!("expected {expected_fields} fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64, EnvError> {
            s.parse().map_err(|_| EnvError::Parse {
                line: line_no,
                msg: format!("bad number {s:?}"),
            })
        };
        let label: u32 = fields[2].parse().map_err(|_| EnvError::Parse {
            line: line_no,
            msg: format!("bad label {:?}", fields[2]),
        })?;
        let goal = fields[3..3 + GOAL_DIM]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<Vec<_>, _>>()?;
        let state = fields[3 + GOAL_DIM..3 + GOAL_DIM + STATE_DIM]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<Vec<_>, _>>()?;
        let clean_label: u32 = fields[expected_fields - 1].parse().map_err(|_| EnvError::Parse {
            line: line_no,
            msg: format!("bad clean_label {:?}", fields[expected_fields - 1]),
        })?;
        out.push(DenoiseSample {
            state,
            goal,
            label,
            clean_label,
        });
    }
    Ok(out)
}
