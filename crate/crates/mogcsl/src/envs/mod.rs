//! Synthetic data sources: a finite tabular multi-objective MDP
//! simulator with exact trajectory enumeration, and the denoising
//! benchmark generator.
//!
//! The simulator draws complete sessions from a [`MomdpSpec`]: sample an
//! initial state, then repeatedly pick an action from a
//! [`SessionPolicy`], collect the vector reward, and stop with the
//! per-(state, action) termination probability or at the horizon.
//! [`enumerate_trajectories`] walks the same branching process exactly,
//! producing every trajectory with its probability.

mod denoise;
mod noisy_recsys;
pub mod presets;

pub use denoise::{
    generate_denoise_dataset, generate_denoise_dataset_with, load_denoise_csv, save_denoise_csv,
    DenoiseConfig, DenoiseSample, GOAL_DIM, STATE_DIM,
};
pub use noisy_recsys::{
    block_item, block_size, in_block, make_noisy_recsys_spec, state_mood,
    BehaviorPolicy, Mood, NoisyRecsysConfig, BLOCK_WEIGHTS,
};

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{GoalVector, Step, Trajectory};

/// Errors from environment construction, simulation, or enumeration.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("policy returned invalid action {action} at timestep {timestep}")]
    InvalidAction { action: u32, timestep: usize },
    #[error("policy returned invalid distribution at timestep {timestep}: {msg}")]
    InvalidDistribution { timestep: usize, msg: String },
    #[error("enumeration budget exceeded: more than {budget} leaves")]
    BudgetExceeded { budget: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A finite multi-objective MDP: states, actions, transition and vector
/// reward tables, initial distribution, horizon, and per-(state, action)
/// session-termination probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Objective count d.
    pub reward_dim: usize,
    /// `transition[s][a][s']`: probability of moving to `s'` after taking
    /// action `a` in state `s`, given the session continues.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`: d-dimensional reward vector.
    pub reward: Vec<Vec<Vec<f64>>>,
    /// Initial state distribution ρ.
    pub initial_dist: Vec<f64>,
    /// Maximum session length.
    pub horizon: usize,
    /// `terminal_prob[s][a]`: probability the session ends right after
    /// taking action `a` in state `s` (before any transition).
    pub terminal_prob: Vec<Vec<f64>>,
}

const PROB_TOL: f64 = 1e-9;

impl MomdpSpec {
    /// Validates all table shapes and probability constraints.
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_states == 0 || self.n_actions == 0 || self.reward_dim == 0 {
            return Err(EnvError::InvalidSpec(
                "states, actions, and reward dimension must be positive".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidSpec("horizon must be at least 1".into()));
        }
        check_dist(&self.initial_dist, self.n_states, "initial distribution")?;
        let shape = |name: &str, got: usize, want: usize| {
            if got != want {
                Err(EnvError::InvalidSpec(format!(
                    "{name}: expected {want} entries, got {got}"
                )))
            } else {
                Ok(())
            }
        };
        shape("transition", self.transition.len(), self.n_states)?;
        shape("reward", self.reward.len(), self.n_states)?;
        shape("terminal_prob", self.terminal_prob.len(), self.n_states)?;
        for s in 0..self.n_states {
            shape("transition row", self.transition[s].len(), self.n_actions)?;
            shape("reward row", self.reward[s].len(), self.n_actions)?;
            shape("terminal row", self.terminal_prob[s].len(), self.n_actions)?;
            for a in 0..self.n_actions {
                check_dist(
                    &self.transition[s][a],
                    self.n_states,
                    &format!("transition[{s}][{a}]"),
                )?;
                if self.reward[s][a].len() != self.reward_dim {
                    return Err(EnvError::InvalidSpec(format!(
                        "reward[{s}][{a}] has {} components, expected {}",
                        self.reward[s][a].len(),
                        self.reward_dim
                    )));
                }
                if self.reward[s][a].iter().any(|r| !r.is_finite()) {
                    return Err(EnvError::InvalidSpec(format!(
                        "reward[{s}][{a}] has a non-finite component"
                    )));
                }
                let p = self.terminal_prob[s][a];
                if !(0.0..=1.0).contains(&p) {
                    return Err(EnvError::InvalidSpec(format!(
                        "terminal_prob[{s}][{a}] = {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<(), EnvError> {
        let json = serde_json::to_string_pretty(self).expect("spec serialization cannot fail");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)?;
        let spec: MomdpSpec = serde_json::from_str(&text).map_err(|e| EnvError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

fn check_dist(p: &[f64], len: usize, name: &str) -> Result<(), EnvError> {
    if p.len() != len {
        return Err(EnvError::InvalidSpec(format!(
            "{name}: expected {len} entries, got {}",
            p.len()
        )));
    }
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(EnvError::InvalidSpec(format!("{name}: negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(EnvError::InvalidSpec(format!("{name}: sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Everything a policy may observe when choosing the next action.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    /// Index of the session being generated (lets behavior policies vary
    /// per session).
    pub session: usize,
    /// Current environment state.
    pub state: usize,
    /// 1-based timestep.
    pub timestep: usize,
    /// Items chosen so far in this session.
    pub history: &'a [u32],
    /// Remaining goal (the initial goal minus rewards received so far),
    /// present only in goal-conditioned rollouts.
    pub goal: Option<&'a [f64]>,
}

/// A policy over the environment's action space. Actions are 1-based item
/// identifiers; `action_probs` returns a distribution over `1..=n_actions`
/// (index 0 of the returned vector is action 1).
pub trait SessionPolicy {
    fn action_probs(&self, ctx: &StepContext) -> Vec<f64>;
}

/// Uniform distribution over all actions.
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl SessionPolicy for UniformPolicy {
    fn action_probs(&self, _ctx: &StepContext) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_actions]
    }
}

/// Always picks the same action.
pub struct FixedActionPolicy {
    pub n_actions: usize,
    pub action: u32,
}

impl SessionPolicy for FixedActionPolicy {
    fn action_probs(&self, _ctx: &StepContext) -> Vec<f64> {
        let mut p = vec![0.0; self.n_actions];
        p[(self.action - 1) as usize] = 1.0;
        p
    }
}

/// Deterministic per-state action table (one action per state).
pub struct StateActionPolicy {
    pub n_actions: usize,
    /// `choice[s]` is the 1-based action taken in state s.
    pub choice: Vec<u32>,
}

impl SessionPolicy for StateActionPolicy {
    fn action_probs(&self, ctx: &StepContext) -> Vec<f64> {
        let mut p = vec![0.0; self.n_actions];
        p[(self.choice[ctx.state] - 1) as usize] = 1.0;
        p
    }
}

/// A goal-conditioned tabular policy that switches between two per-state
/// action tables depending on whether the first remaining-goal component
/// exceeds a threshold. Used to build goal-sensitivity cases.
pub struct GoalSwitchPolicy {
    pub n_actions: usize,
    pub threshold: f64,
    /// Chosen when `goal[0] > threshold`.
    pub high_choice: Vec<u32>,
    /// Chosen otherwise (also when no goal is provided).
    pub low_choice: Vec<u32>,
}

impl SessionPolicy for GoalSwitchPolicy {
    fn action_probs(&self, ctx: &StepContext) -> Vec<f64> {
        let high = ctx.goal.is_some_and(|g| g[0] > self.threshold);
        let table = if high { &self.high_choice } else { &self.low_choice };
        let mut p = vec![0.0; self.n_actions];
        p[(table[ctx.state] - 1) as usize] = 1.0;
        p
    }
}

/// Wraps a `(history, timestep) -> action` chooser as a policy.
pub struct FnPolicy<F: Fn(&[u32], usize) -> u32> {
    pub n_actions: usize,
    pub choose: F,
}

impl<F: Fn(&[u32], usize) -> u32> SessionPolicy for FnPolicy<F> {
    fn action_probs(&self, ctx: &StepContext) -> Vec<f64> {
        let a = (self.choose)(ctx.history, ctx.timestep);
        let mut p = vec![0.0; self.n_actions];
        if a >= 1 && (a as usize) <= self.n_actions {
            p[(a - 1) as usize] = 1.0;
        }
        // Out-of-range actions leave an all-zero vector, which simulate
        // reports as an invalid action at the offending timestep.
        p
    }
}

/// Options for [`simulate_with`].
#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub n_trajectories: usize,
    pub seed: u64,
    /// Fixed initial state; sampled from ρ when absent.
    pub initial_state: Option<usize>,
    /// Initial goal for goal-conditioned rollouts; decremented by each
    /// received reward.
    pub initial_goal: Option<Vec<f64>>,
    /// Overrides the spec horizon when shorter.
    pub max_len: Option<usize>,
}

impl SimulateOptions {
    pub fn new(n_trajectories: usize, seed: u64) -> Self {
        SimulateOptions {
            n_trajectories,
            seed,
            initial_state: None,
            initial_goal: None,
            max_len: None,
        }
    }

    pub fn with_initial_state(mut self, s: usize) -> Self {
        self.initial_state = Some(s);
        self
    }

    pub fn with_initial_goal(mut self, g: Vec<f64>) -> Self {
        self.initial_goal = Some(g);
        self
    }
}

/// Draws complete sessions from the spec under the given policy.
/// Deterministic given the seed.
pub fn simulate(
    spec: &MomdpSpec,
    policy: &dyn SessionPolicy,
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, EnvError> {
    simulate_with(spec, policy, &SimulateOptions::new(n_trajectories, seed))
}

/// [`simulate`] with explicit initial state/goal and length overrides.
pub fn simulate_with(
    spec: &MomdpSpec,
    policy: &dyn SessionPolicy,
    opts: &SimulateOptions,
) -> Result<Vec<Trajectory>, EnvError> {
    spec.validate()?;
    if let Some(s) = opts.initial_state {
        if s >= spec.n_states {
            return Err(EnvError::Config(format!(
                "initial state {s} out of range (n_states = {})",
                spec.n_states
            )));
        }
    }
    let max_len = opts.max_len.unwrap_or(spec.horizon).min(spec.horizon);
    let mut rng = Pcg64Mcg::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(opts.n_trajectories);

    for session in 0..opts.n_trajectories {
        let mut state = match opts.initial_state {
            Some(s) => s,
            None => sample_index(&spec.initial_dist, &mut rng),
        };
        let mut goal = opts.initial_goal.clone().map(GoalVector);
        let mut history: Vec<u32> = Vec::new();
        let mut steps: Vec<Step> = Vec::new();

        for t in 1..=max_len {
            let ctx = StepContext {
                session,
                state,
                timestep: t,
                history: &history,
                goal: goal.as_ref().map(|g| g.values()),
            };
            let probs = policy.action_probs(&ctx);
            let action_idx = sample_action(&probs, spec.n_actions, t, &mut rng)?;
            let action = (action_idx + 1) as u32;
            let reward = spec.reward[state][action_idx].clone();
            if let Some(g) = goal.take() {
                goal = Some(g.sub(&reward));
            }
            history.push(action);
            steps.push(Step { action, reward });

            let stop: f64 = rng.random_range(0.0..1.0);
            if stop < spec.terminal_prob[state][action_idx] || t == max_len {
                break;
            }
            state = sample_index(&spec.transition[state][action_idx], &mut rng);
        }
        out.push(Trajectory {
            id: format!("sim-{session}"),
            steps,
        });
    }
    Ok(out)
}

fn sample_index(dist: &[f64], rng: &mut Pcg64Mcg) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

fn sample_action(
    probs: &[f64],
    n_actions: usize,
    timestep: usize,
    rng: &mut Pcg64Mcg,
) -> Result<usize, EnvError> {
    if probs.len() != n_actions {
        return Err(EnvError::InvalidDistribution {
            timestep,
            msg: format!("expected {n_actions} probabilities, got {}", probs.len()),
        });
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        if sum == 0.0 {
            // A FnPolicy chooser returned an out-of-range action.
            return Err(EnvError::InvalidAction {
                action: 0,
                timestep,
            });
        }
        return Err(EnvError::InvalidDistribution {
            timestep,
            msg: format!("probabilities sum to {sum}"),
        });
    }
    Ok(sample_index(probs, rng))
}

/// Default cap on the number of enumerated trajectories.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

/// Exhaustively enumerates every trajectory the branching process can
/// produce from a fixed initial state, with its exact probability.
///
/// Each trajectory's probability is the product of policy, continuation,
/// transition, and termination probabilities along it; the probabilities
/// of all returned trajectories sum to 1 (±1e-9). Errors with a resource
/// guard if more than [`ENUMERATION_BUDGET`] leaves would be produced.
pub fn enumerate_trajectories(
    spec: &MomdpSpec,
    policy: &dyn SessionPolicy,
    initial_state: usize,
    initial_goal: Option<&[f64]>,
    max_len: usize,
) -> Result<Vec<(Trajectory, f64)>, EnvError> {
    spec.validate()?;
    if initial_state >= spec.n_states {
        return Err(EnvError::Config(format!(
            "initial state {initial_state} out of range"
        )));
    }
    let max_len = max_len.min(spec.horizon);
    let mut out: Vec<(Trajectory, f64)> = Vec::new();
    let mut steps: Vec<Step> = Vec::new();
    let mut history: Vec<u32> = Vec::new();
    let goal = initial_goal.map(|g| GoalVector(g.to_vec()));
    walk(
        spec, policy, initial_state, 1, 1.0, &goal, &mut history, &mut steps, max_len, &mut out,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    spec: &MomdpSpec,
    policy: &dyn SessionPolicy,
    state: usize,
    timestep: usize,
    prob: f64,
    goal: &Option<GoalVector>,
    history: &mut Vec<u32>,
    steps: &mut Vec<Step>,
    max_len: usize,
    out: &mut Vec<(Trajectory, f64)>,
) -> Result<(), EnvError> {
    let ctx = StepContext {
        session: 0,
        state,
        timestep,
        history,
        goal: goal.as_ref().map(|g| g.values()),
    };
    let probs = policy.action_probs(&ctx);
    if probs.len() != spec.n_actions {
        return Err(EnvError::InvalidDistribution {
            timestep,
            msg: format!(
                "expected {} probabilities, got {}",
                spec.n_actions,
                probs.len()
            ),
        });
    }
    for (a, &pa) in probs.iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        let reward = &spec.reward[state][a];
        let action = (a + 1) as u32;
        steps.push(Step {
            action,
            reward: reward.clone(),
        });
        history.push(action);
        let next_goal = goal.as_ref().map(|g| g.sub(reward));
        let p_here = prob * pa;
        let p_term = if timestep == max_len {
            1.0
        } else {
            spec.terminal_prob[state][a]
        };

        if p_term > 0.0 {
            if out.len() >= ENUMERATION_BUDGET {
                return Err(EnvError::BudgetExceeded {
                    budget: ENUMERATION_BUDGET,
                });
            }
            out.push((
                Trajectory {
                    id: format!("enum-{}", out.len()),
                    steps: steps.clone(),
                },
                p_here * p_term,
            ));
        }
        if p_term < 1.0 {
            let p_cont = p_here * (1.0 - p_term);
            for (s_next, &pt) in spec.transition[state][a].iter().enumerate() {
                if pt <= 0.0 {
                    continue;
                }
                walk(
                    spec,
                    policy,
                    s_next,
                    timestep + 1,
                    p_cont * pt,
                    &next_goal,
                    history,
                    steps,
                    max_len,
                    out,
                )?;
            }
        }
        history.pop();
        steps.pop();
    }
    Ok(())
}
