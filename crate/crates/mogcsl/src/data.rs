//! Trajectory data model, file ingestion, goal relabeling, and dataset
//! splitting/statistics.
//!
//! A [`Trajectory`] records one complete session: an ordered list of
//! (action, reward-vector) steps. Relabeling replaces each step's reward
//! with its goal — the componentwise cumulative reward from that step to
//! the end of the session — producing the (history, timestep, action,
//! goal) tuples the policy trains on.
//!
//! File formats:
//! - JSONL (canonical): one object per line,
//!   `{"id": "...", "steps": [{"a": 3, "r": [1, 0]}, ...]}`.
//! - CSV: header `traj_id,t,action,r_1,...,r_d`, rows sorted by
//!   `(traj_id, t)`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from loading, validating, or partitioning trajectory data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(
        "schema error at line {line}: reward dimensionality {found} differs from {expected}"
    )]
    MixedRewardDim {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid trajectory {id}: {msg}")]
    InvalidTrajectory { id: String, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
}

/// A d-dimensional goal: the componentwise cumulative future reward of a
/// trajectory suffix, one component per objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalVector(pub Vec<f64>);

impl GoalVector {
    pub fn zeros(dim: usize) -> Self {
        GoalVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Componentwise sum with a reward vector.
    pub fn add(&self, rhs: &[f64]) -> GoalVector {
        GoalVector(self.0.iter().zip(rhs).map(|(a, b)| a + b).collect())
    }

    /// Componentwise difference (used to decrement a goal by a received
    /// reward).
    pub fn sub(&self, rhs: &[f64]) -> GoalVector {
        GoalVector(self.0.iter().zip(rhs).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> GoalVector {
        GoalVector(self.0.iter().map(|v| v * factor).collect())
    }

    /// Dot product with a weight vector.
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

impl fmt::Display for GoalVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// One interaction: the item acted on and the vector reward received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Item identifier in `[1, N]`. Id 0 is reserved for padding in the
    /// model layer and never appears in data.
    #[serde(rename = "a")]
    pub action: u32,
    /// One non-negative, finite reward component per objective.
    #[serde(rename = "r")]
    pub reward: Vec<f64>,
}

/// One complete session: a non-empty ordered list of steps sharing a
/// common reward dimensionality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Builds a trajectory, enforcing the type invariants: non-empty,
    /// valid action ids, consistent and finite rewards.
    pub fn new(id: impl Into<String>, steps: Vec<Step>) -> Result<Self, DataError> {
        let id = id.into();
        if steps.is_empty() {
            return Err(DataError::InvalidTrajectory {
                id,
                msg: "trajectory has no steps".into(),
            });
        }
        let dim = steps[0].reward.len();
        if dim == 0 {
            return Err(DataError::InvalidTrajectory {
                id,
                msg: "reward vector is empty".into(),
            });
        }
        for (i, step) in steps.iter().enumerate() {
            if step.action == 0 {
                return Err(DataError::InvalidTrajectory {
                    id,
                    msg: format!("step {}: action id 0 is reserved", i + 1),
                });
            }
            if step.reward.len() != dim {
                return Err(DataError::InvalidTrajectory {
                    id,
                    msg: format!(
                        "step {}: reward dimensionality {} differs from {}",
                        i + 1,
                        step.reward.len(),
                        dim
                    ),
                });
            }
            if step.reward.iter().any(|r| !r.is_finite()) {
                return Err(DataError::InvalidTrajectory {
                    id,
                    msg: format!("step {}: non-finite reward", i + 1),
                });
            }
        }
        Ok(Trajectory { id, steps })
    }

    /// Number of steps `|τ|`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Reward dimensionality d.
    pub fn reward_dim(&self) -> usize {
        self.steps[0].reward.len()
    }
}

/// A training tuple produced by relabeling: the item-history prefix, the
/// timestep, the demonstrated action, and the goal that the trajectory
/// suffix actually achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabeledStep {
    /// Items interacted with before this step (full prefix; truncation to
    /// the model window happens in the model layer).
    pub history: Vec<u32>,
    /// 1-based timestep within the session.
    pub timestep: usize,
    /// The demonstrated action.
    pub action: u32,
    /// Cumulative reward from this step to the end of the session.
    pub goal: GoalVector,
}

/// Aggregate goal statistics over a trajectory dataset, backing the
/// statistical goal-selection strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// `per_timestep_mean_goal[t-1]` is the mean goal at timestep t over
    /// all trajectories of length ≥ t; defined exactly for t in
    /// `[1, max_timestep]`.
    pub per_timestep_mean_goal: Vec<GoalVector>,
    /// Mean initial goal (mean cumulative session reward).
    pub global_mean_goal: GoalVector,
    /// Componentwise maximum initial goal, for the max selection mode.
    pub max_initial_goal: GoalVector,
    /// Longest session length observed.
    pub max_timestep: usize,
}

impl DatasetStats {
    pub fn reward_dim(&self) -> usize {
        self.global_mean_goal.dim()
    }

    /// Mean goal at timestep t, clamped to the observed range.
    pub fn mean_goal_at(&self, timestep: usize) -> &GoalVector {
        let t = timestep.clamp(1, self.max_timestep);
        &self.per_timestep_mean_goal[t - 1]
    }
}

/// Supported trajectory file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Jsonl,
    Csv,
}

/// Loads all trajectories from a file, rejecting malformed lines (with
/// their line number) and mixed reward dimensionality.
pub fn load_trajectories(path: &Path, format: FileFormat) -> Result<Vec<Trajectory>, DataError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        FileFormat::Jsonl => load_jsonl(reader),
        FileFormat::Csv => load_csv(reader),
    }
}

fn load_jsonl(reader: impl BufRead) -> Result<Vec<Trajectory>, DataError> {
    let mut out: Vec<Trajectory> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Trajectory = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let traj = Trajectory::new(raw.id, raw.steps).map_err(|e| DataError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        check_dim(&mut dim, traj.reward_dim(), line_no)?;
        out.push(traj);
    }
    Ok(out)
}

fn load_csv(reader: impl BufRead) -> Result<Vec<Trajectory>, DataError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, line)) => line?,
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "traj_id" || cols[1] != "t" || cols[2] != "action" {
        return Err(DataError::Parse {
            line: 1,
            msg: format!("expected header traj_id,t,action,r_1,...,r_d; got {header:?}"),
        });
    }
    let dim = cols.len() - 3;
    for (i, c) in cols[3..].iter().enumerate() {
        if *c != format!("r_{}", i + 1) {
            return Err(DataError::Parse {
                line: 1,
                msg: format!("expected reward column r_{}, got {c:?}", i + 1),
            });
        }
    }

    let mut out: Vec<Trajectory> = Vec::new();
    let mut current: Option<(String, Vec<Step>)> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + dim {
            return Err(DataError::Parse {
                line: line_no,
                msg: format!("expected {} fields, got {}", 3 + dim, fields.len()),
            });
        }
        let id = fields[0].to_string();
        let t: usize = fields[1].parse().map_err(|_| DataError::Parse {
            line: line_no,
            msg: format!("bad timestep {:?}", fields[1]),
        })?;
        let action: u32 = fields[2].parse().map_err(|_| DataError::Parse {
            line: line_no,
            msg: format!("bad action {:?}", fields[2]),
        })?;
        let mut reward = Vec::with_capacity(dim);
        for f in &fields[3..] {
            reward.push(f.parse::<f64>().map_err(|_| DataError::Parse {
                line: line_no,
                msg: format!("bad reward component {f:?}"),
            })?);
        }
        let step = Step { action, reward };

        match current.as_mut() {
            Some((cur_id, steps)) if *cur_id == id => {
                if t != steps.len() + 1 {
                    return Err(DataError::Parse {
                        line: line_no,
                        msg: format!(
                            "timestep {t} out of order for trajectory {id} (expected {})",
                            steps.len() + 1
                        ),
                    });
                }
                steps.push(step);
            }
            _ => {
                if let Some((cur_id, steps)) = current.take() {
                    out.push(finish_traj(cur_id, steps, line_no)?);
                }
                if t != 1 {
                    return Err(DataError::Parse {
                        line: line_no,
                        msg: format!("trajectory {id} starts at timestep {t}, expected 1"),
                    });
                }
                current = Some((id, vec![step]));
            }
        }
    }
    if let Some((id, steps)) = current.take() {
        out.push(finish_traj(id, steps, 0)?);
    }
    Ok(out)
}

fn finish_traj(id: String, steps: Vec<Step>, line: usize) -> Result<Trajectory, DataError> {
    Trajectory::new(id, steps).map_err(|e| DataError::Parse {
        line,
        msg: e.to_string(),
    })
}

fn check_dim(dim: &mut Option<usize>, found: usize, line: usize) -> Result<(), DataError> {
    match dim {
        None => {
            *dim = Some(found);
            Ok(())
        }
        Some(expected) if *expected == found => Ok(()),
        Some(expected) => Err(DataError::MixedRewardDim {
            line,
            expected: *expected,
            found,
        }),
    }
}

/// Writes trajectories in the canonical JSONL format.
pub fn save_trajectories_jsonl(path: &Path, trajs: &[Trajectory]) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for traj in trajs {
        let line = serde_json::to_string(traj).expect("trajectory serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes trajectories in the CSV format (`traj_id,t,action,r_1,...,r_d`).
pub fn save_trajectories_csv(path: &Path, trajs: &[Trajectory]) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let dim = trajs.first().map_or(0, Trajectory::reward_dim);
    let mut header = String::from("traj_id,t,action");
    for i in 1..=dim {
        header.push_str(&format!(",r_{i}"));
    }
    writeln!(w, "{header}")?;
    for traj in trajs {
        for (i, step) in traj.steps.iter().enumerate() {
            let mut row = format!("{},{},{}", traj.id, i + 1, step.action);
            for r in &step.reward {
                row.push_str(&format!(",{r}"));
            }
            writeln!(w, "{row}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Replaces every step's reward with its goal: the componentwise sum of
/// rewards from that step to the end of the session. The history at step
/// t is the untruncated item prefix `v_{1..t-1}`.
pub fn relabel(traj: &Trajectory) -> Vec<RelabeledStep> {
    let n = traj.len();
    let dim = traj.reward_dim();
    // Suffix sums, computed backwards so each goal is exact for integer
    // rewards.
    let mut goals = vec![GoalVector::zeros(dim); n];
    let mut acc = GoalVector::zeros(dim);
    for t in (0..n).rev() {
        acc = acc.add(&traj.steps[t].reward);
        goals[t] = acc.clone();
    }
    let mut out = Vec::with_capacity(n);
    let mut history = Vec::with_capacity(n);
    for (t, step) in traj.steps.iter().enumerate() {
        out.push(RelabeledStep {
            history: history.clone(),
            timestep: t + 1,
            action: step.action,
            goal: goals[t].clone(),
        });
        history.push(step.action);
    }
    out
}

/// Relabels every trajectory in a dataset.
pub fn relabel_all(trajs: &[Trajectory]) -> Vec<RelabeledStep> {
    trajs.iter().flat_map(relabel).collect()
}

/// Writes relabeled steps as JSONL (one step object per line).
pub fn save_relabeled_jsonl(path: &Path, steps: &[RelabeledStep]) -> Result<(), DataError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for step in steps {
        let line = serde_json::to_string(step).expect("step serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads relabeled steps from JSONL.
pub fn load_relabeled_jsonl(path: &Path) -> Result<Vec<RelabeledStep>, DataError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let step: RelabeledStep = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(step);
    }
    Ok(out)
}

/// Computes per-timestep and global mean goals over a dataset.
///
/// `per_timestep_mean_goal[t-1]` averages the goal at timestep t over all
/// trajectories with `|τ| ≥ t`; the global mean averages the initial goal
/// over all trajectories.
pub fn compute_stats(trajs: &[Trajectory]) -> Result<DatasetStats, DataError> {
    if trajs.is_empty() {
        return Err(DataError::Empty("compute_stats needs at least one trajectory".into()));
    }
    let dim = trajs[0].reward_dim();
    for t in trajs {
        if t.reward_dim() != dim {
            return Err(DataError::MixedRewardDim {
                line: 0,
                expected: dim,
                found: t.reward_dim(),
            });
        }
    }
    let max_timestep = trajs.iter().map(Trajectory::len).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; dim]; max_timestep];
    let mut counts = vec![0usize; max_timestep];
    let mut global_sum = vec![0.0; dim];
    let mut max_initial = vec![f64::NEG_INFINITY; dim];

    for traj in trajs {
        let steps = relabel(traj);
        for step in &steps {
            let t = step.timestep - 1;
            counts[t] += 1;
            for (s, v) in sums[t].iter_mut().zip(step.goal.values()) {
                *s += v;
            }
        }
        for ((g, v), m) in global_sum
            .iter_mut()
            .zip(steps[0].goal.values())
            .zip(max_initial.iter_mut())
        {
            *g += v;
            *m = m.max(*v);
        }
    }

    let per_timestep_mean_goal = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| GoalVector(s.into_iter().map(|v| v / c as f64).collect()))
        .collect();
    let n = trajs.len() as f64;
    Ok(DatasetStats {
        per_timestep_mean_goal,
        global_mean_goal: GoalVector(global_sum.into_iter().map(|v| v / n).collect()),
        max_initial_goal: GoalVector(max_initial),
        max_timestep,
    })
}

/// Keeps trajectories whose length lies in `[min_len, max_len]`.
///
/// Session-length filtering is optional: synthetic environments need
/// lengths outside the ranges used for the e-commerce datasets.
pub fn filter_by_length(
    trajs: Vec<Trajectory>,
    min_len: usize,
    max_len: usize,
) -> Vec<Trajectory> {
    trajs
        .into_iter()
        .filter(|t| t.len() >= min_len && t.len() <= max_len)
        .collect()
}

/// Deterministically partitions a dataset into train/validation/test.
///
/// The ratios must be positive and sum to 1 (±1e-9). Shuffling uses a
/// PCG generator seeded by `seed`; sizes are assigned by floor counts with
/// the remainder going to the largest fractional parts (earlier splits win
/// ties), so `(0.8, 0.1, 0.1)` on 10 trajectories yields sizes (8, 1, 1).
pub fn split(
    trajs: &[Trajectory],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>, Vec<Trajectory>), DataError> {
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(DataError::Config(format!(
            "split ratios must be positive, got ({a}, {b}, {c})"
        )));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split ratios must sum to 1, got {}",
            a + b + c
        )));
    }
    let n = trajs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    idx.shuffle(&mut rng);

    let raw = [a * n as f64, b * n as f64, c * n as f64];
    let mut sizes = [0usize; 3];
    let mut assigned = 0;
    for (s, r) in sizes.iter_mut().zip(&raw) {
        *s = r.floor() as usize;
        assigned += *s;
    }
    // Largest-remainder apportionment for whatever floor left over.
    let mut rema: Vec<(usize, f64)> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r - r.floor()))
        .collect();
    rema.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    for k in 0..(n - assigned) {
        sizes[rema[k % 3].0] += 1;
    }

    let take = |range: std::ops::Range<usize>| -> Vec<Trajectory> {
        idx[range].iter().map(|&i| trajs[i].clone()).collect()
    };
    let train = take(0..sizes[0]);
    let valid = take(sizes[0]..sizes[0] + sizes[1]);
    let test = take(sizes[0] + sizes[1]..n);
    Ok((train, valid, test))
}

/// Groups relabeled steps per timestep (useful for inspecting goal
/// distributions by position).
pub fn goals_by_timestep(steps: &[RelabeledStep]) -> BTreeMap<usize, Vec<GoalVector>> {
    let mut map: BTreeMap<usize, Vec<GoalVector>> = BTreeMap::new();
    for s in steps {
        map.entry(s.timestep).or_default().push(s.goal.clone());
    }
    map
}
