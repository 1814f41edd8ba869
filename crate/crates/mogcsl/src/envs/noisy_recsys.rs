//! A synthetic sequential-recommendation testbed with controllable noise.
//!
//! Users move through preference phases laid out on an item ring with a
//! stride of two. While *engaged*, each phase has a graded block of four
//! appealing items; choosing any of them earns a click and a fractional
//! purchase, keeps the session alive, and advances the phase forward.
//! Anything else earns nothing and tends to end the session early.
//!
//! A configurable fraction of traffic is junk in one of two modes, both
//! behaving like *reconsumption loops*: they keep choosing plausible
//! block items but their phase walks backward, so a short junk prefix is
//! indistinguishable from an engaged one while its continuation comes
//! from the opposite, disjoint block. *Click junk* earns inflated clicks
//! (and never purchases) regardless of preference; *purchase junk* the
//! reverse; both end sessions early. Junk totals rival engaged ones
//! along the inflated objective, so a scalarized goal with any fixed
//! weighting leaves one junk mode inside its high-goal region and blends
//! backward continuations into its top ranks — while each junk mode
//! keeps the *other* objective at zero, so the full goal vector filters
//! both. That is what makes this the testbed where vector-goal
//! conditioning should help.
//!
//! With `noise_level` 0 no session is ever junk; with 1 every session is
//! junk forever and all policies become identical in distribution.

use serde::{Deserialize, Serialize};

use super::{EnvError, MomdpSpec, SessionPolicy, StepContext};

/// Configuration for [`make_noisy_recsys_spec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisyRecsysConfig {
    /// Number of preference phases. The spec carries three states per
    /// phase: engaged, click-junk, and purchase-junk.
    pub n_phases: usize,
    /// Item count N.
    pub n_actions: usize,
    /// Fraction of junk traffic in [0, 1], split evenly between the two
    /// junk modes.
    pub noise_level: f64,
    /// Maximum session length.
    pub horizon: usize,
    /// Multiplier on both reward components.
    pub reward_scale: f64,
}

impl Default for NoisyRecsysConfig {
    fn default() -> Self {
        NoisyRecsysConfig {
            n_phases: 9,
            n_actions: 18,
            noise_level: 0.5,
            horizon: 12,
            reward_scale: 1.0,
        }
    }
}

/// Graded appeal within a phase's preference block.
pub const BLOCK_WEIGHTS: [f64; 4] = [0.40, 0.30, 0.18, 0.12];
/// Item-ring stride between consecutive phases; one phase step moves the
/// block two items, so the forward and backward neighbor blocks are
/// disjoint.
pub const ITEM_STRIDE: usize = 2;
/// Purchase reward earned alongside each preferred-block click.
const PURCHASE_RATE: f64 = 0.4;
/// Per-step click reward on click-junk sessions.
const CLICK_JUNK_REWARD: f64 = 2.5;
/// Per-step purchase reward on purchase-junk sessions.
const PURCHASE_JUNK_REWARD: f64 = 1.2;
const TERM_GOOD: f64 = 0.08;
const TERM_WRONG: f64 = 0.45;
/// Click-junk bursts are shorter than purchase-junk sprees.
const TERM_CLICK_JUNK: f64 = 0.5;
const TERM_PURCHASE_JUNK: f64 = 0.4;
/// Base rate of engaged -> junk drift (scaled by the noise level, split
/// between the two junk modes) and of junk -> engaged recovery (scaled
/// by the complement).
const MOOD_FLIP: f64 = 0.3;

/// Size of a phase's preference block.
pub fn block_size(n_actions: usize) -> usize {
    BLOCK_WEIGHTS.len().min(n_actions)
}

/// The j-th item of the phase's preference block (j < block size).
pub fn block_item(phase: usize, j: usize, n_actions: usize) -> u32 {
    (1 + (phase * ITEM_STRIDE + j) % n_actions) as u32
}

/// Whether an action belongs to the phase's preference block.
pub fn in_block(action: u32, phase: usize, n_actions: usize) -> bool {
    (0..block_size(n_actions)).any(|j| block_item(phase, j, n_actions) == action)
}

/// State index layout: engaged phases first, then click-junk, then
/// purchase-junk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mood {
    Engaged,
    ClickJunk,
    PurchaseJunk,
}

/// Decomposes a state index into (phase, mood).
pub fn state_mood(state: usize, n_phases: usize) -> (usize, Mood) {
    match state / n_phases {
        0 => (state, Mood::Engaged),
        1 => (state - n_phases, Mood::ClickJunk),
        _ => (state - 2 * n_phases, Mood::PurchaseJunk),
    }
}

/// Builds the testbed spec with `3 * n_phases` states.
pub fn make_noisy_recsys_spec(config: &NoisyRecsysConfig) -> Result<MomdpSpec, EnvError> {
    if config.n_phases == 0 || config.n_actions == 0 {
        return Err(EnvError::Config(
            "n_phases and n_actions must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.noise_level) {
        return Err(EnvError::Config(format!(
            "noise_level {} outside [0, 1]",
            config.noise_level
        )));
    }
    if config.horizon == 0 {
        return Err(EnvError::Config("horizon must be at least 1".into()));
    }
    if !(config.reward_scale.is_finite() && config.reward_scale > 0.0) {
        return Err(EnvError::Config("reward_scale must be positive".into()));
    }

    let p = config.n_phases;
    let n = config.n_actions;
    let n_states = 3 * p;
    let lambda = config.noise_level;
    let scale = config.reward_scale;
    let drift = MOOD_FLIP * lambda / 2.0;
    let recover = MOOD_FLIP * (1.0 - lambda);

    let mut transition = vec![vec![vec![0.0; n_states]; n]; n_states];
    let mut reward = vec![vec![vec![0.0; 2]; n]; n_states];
    let mut terminal_prob = vec![vec![0.0; n]; n_states];

    for phase in 0..p {
        let forward = (phase + 1) % p;
        let backward = (phase + p - 1) % p;

        // Engaged state: block choices earn a click and a fractional
        // purchase and walk the phase forward; anything else earns
        // nothing, keeps the phase, and tends to end the session.
        let s = phase;
        for a in 0..n {
            let good = in_block((a + 1) as u32, phase, n);
            if good {
                reward[s][a] = vec![scale, PURCHASE_RATE * scale];
            }
            terminal_prob[s][a] = if good { TERM_GOOD } else { TERM_WRONG };
            let dest = if good { forward } else { phase };
            transition[s][a][dest] = 1.0 - 2.0 * drift;
            transition[s][a][dest + p] += drift;
            transition[s][a][dest + 2 * p] += drift;
        }

        // Junk states: one objective inflated regardless of the action,
        // the other stays at zero; the phase walks backward (a
        // reconsumption loop) and sessions end early.
        for (offset, junk_reward, term) in [
            (p, vec![CLICK_JUNK_REWARD * scale, 0.0], TERM_CLICK_JUNK),
            (2 * p, vec![0.0, PURCHASE_JUNK_REWARD * scale], TERM_PURCHASE_JUNK),
        ] {
            let s = phase + offset;
            for a in 0..n {
                reward[s][a] = junk_reward.clone();
                terminal_prob[s][a] = term;
                transition[s][a][backward + offset] = 1.0 - recover;
                transition[s][a][backward] += recover;
            }
        }
    }

    // Sessions start mostly in the early phases (geometric weights), so
    // first interactions carry predictable structure.
    let mut phase_weights = vec![0.0; p];
    let mut w = 1.0;
    for pw in phase_weights.iter_mut() {
        *pw = w;
        w *= 0.55;
    }
    let weight_sum: f64 = phase_weights.iter().sum();
    let mut initial_dist = vec![0.0; n_states];
    for phase in 0..p {
        let pw = phase_weights[phase] / weight_sum;
        initial_dist[phase] = (1.0 - lambda) * pw;
        initial_dist[phase + p] = lambda * pw / 2.0;
        initial_dist[phase + 2 * p] = lambda * pw / 2.0;
    }

    let spec = MomdpSpec {
        n_states,
        n_actions: n,
        reward_dim: 2,
        transition,
        reward,
        initial_dist,
        horizon: config.horizon,
        terminal_prob,
    };
    spec.validate()?;
    Ok(spec)
}

/// The logging policy that generated the offline data: every user mostly
/// chooses from the current phase's graded block with uniform
/// exploration. Junk users look the same step by step — what
/// distinguishes them is that their phase walks backward, so their
/// continuations come from the opposite block and carry no forward
/// preference signal.
pub struct BehaviorPolicy {
    n_phases: usize,
    n_actions: usize,
    /// Probability mass of uniform exploration.
    pub epsilon: f64,
}

impl BehaviorPolicy {
    pub fn new(config: &NoisyRecsysConfig, _seed: u64) -> Self {
        BehaviorPolicy {
            n_phases: config.n_phases,
            n_actions: config.n_actions,
            epsilon: 0.15,
        }
    }
}

impl SessionPolicy for BehaviorPolicy {
    fn action_probs(&self, ctx: &StepContext) -> Vec<f64> {
        let n = self.n_actions;
        let uniform = 1.0 / n as f64;
        let (phase, _mood) = state_mood(ctx.state, self.n_phases);
        let k = block_size(n);
        let weight_sum: f64 = BLOCK_WEIGHTS[..k].iter().sum();
        let mut probs = vec![self.epsilon * uniform; n];
        for j in 0..k {
            let item = block_item(phase, j, n);
            probs[(item - 1) as usize] += (1.0 - self.epsilon) * BLOCK_WEIGHTS[j] / weight_sum;
        }
        probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{UniformPolicy, simulate};

    fn mean_goal(trajs: &[crate::data::Trajectory]) -> [f64; 2] {
        let mut sum = [0.0; 2];
        for t in trajs {
            for s in &t.steps {
                sum[0] += s.reward[0];
                sum[1] += s.reward[1];
            }
        }
        let n = trajs.len() as f64;
        [sum[0] / n, sum[1] / n]
    }

    /// Finite-horizon value iteration on the 0.5/0.5-scalarized reward,
    /// honoring per-(state, action) termination. Returns per-(timestep,
    /// state) greedy actions.
    fn value_iteration(spec: &MomdpSpec, w: [f64; 2]) -> Vec<Vec<u32>> {
        let mut v_next = vec![0.0; spec.n_states];
        let mut choices = vec![vec![1u32; spec.n_states]; spec.horizon];
        for t in (0..spec.horizon).rev() {
            let mut v = vec![0.0; spec.n_states];
            for s in 0..spec.n_states {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..spec.n_actions {
                    let r = w[0] * spec.reward[s][a][0] + w[1] * spec.reward[s][a][1];
                    let cont: f64 = if t + 1 < spec.horizon {
                        (1.0 - spec.terminal_prob[s][a])
                            * spec.transition[s][a]
                                .iter()
                                .zip(&v_next)
                                .map(|(p, vv)| p * vv)
                                .sum::<f64>()
                    } else {
                        0.0
                    };
                    let q = r + cont;
                    if q > best {
                        best = q;
                        best_a = a;
                    }
                }
                v[s] = best;
                choices[t][s] = (best_a + 1) as u32;
            }
            v_next = v;
        }
        choices
    }

    /// Exact vector-valued evaluation of a per-(timestep, state) action
    /// table by forward recursion over the alive-state distribution.
    fn exact_mean_goal(spec: &MomdpSpec, choices: &[Vec<u32>]) -> [f64; 2] {
        let mut alive = spec.initial_dist.clone();
        let mut mean = [0.0; 2];
        for t in 0..spec.horizon {
            let mut next = vec![0.0; spec.n_states];
            for s in 0..spec.n_states {
                if alive[s] <= 0.0 {
                    continue;
                }
                let a = (choices[t][s] - 1) as usize;
                mean[0] += alive[s] * spec.reward[s][a][0];
                mean[1] += alive[s] * spec.reward[s][a][1];
                let cont = alive[s] * (1.0 - spec.terminal_prob[s][a]);
                for (s2, &p) in spec.transition[s][a].iter().enumerate() {
                    next[s2] += cont * p;
                }
            }
            alive = next;
        }
        mean
    }

    /// Exact evaluation of the uniform-random policy.
    fn exact_mean_goal_uniform(spec: &MomdpSpec) -> [f64; 2] {
        let mut alive = spec.initial_dist.clone();
        let mut mean = [0.0; 2];
        let pa = 1.0 / spec.n_actions as f64;
        for _ in 0..spec.horizon {
            let mut next = vec![0.0; spec.n_states];
            for s in 0..spec.n_states {
                if alive[s] <= 0.0 {
                    continue;
                }
                for a in 0..spec.n_actions {
                    mean[0] += alive[s] * pa * spec.reward[s][a][0];
                    mean[1] += alive[s] * pa * spec.reward[s][a][1];
                    let cont = alive[s] * pa * (1.0 - spec.terminal_prob[s][a]);
                    for (s2, &p) in spec.transition[s][a].iter().enumerate() {
                        next[s2] += cont * p;
                    }
                }
            }
            alive = next;
        }
        mean
    }

    #[test]
    fn zero_noise_optimal_beats_random_on_both_objectives() {
        let config = NoisyRecsysConfig {
            n_phases: 6,
            n_actions: 8,
            noise_level: 0.0,
            horizon: 10,
            reward_scale: 1.0,
        };
        let spec = make_noisy_recsys_spec(&config).unwrap();
        let choices = value_iteration(&spec, [0.5, 0.5]);
        let optimal = exact_mean_goal(&spec, &choices);
        let random = exact_mean_goal_uniform(&spec);
        assert!(
            optimal[0] > random[0] && optimal[1] > random[1],
            "optimal {optimal:?} should exceed random {random:?} on both objectives"
        );
    }

    #[test]
    fn single_action_all_policies_identical() {
        let config = NoisyRecsysConfig {
            n_phases: 3,
            n_actions: 1,
            noise_level: 0.3,
            horizon: 5,
            reward_scale: 1.0,
        };
        let spec = make_noisy_recsys_spec(&config).unwrap();
        let a = simulate(&spec, &UniformPolicy { n_actions: 1 }, 200, 4).unwrap();
        let b = simulate(
            &spec,
            &crate::envs::FixedActionPolicy {
                n_actions: 1,
                action: 1,
            },
            200,
            4,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_noise_equalizes_preferred_and_random() {
        let config = NoisyRecsysConfig {
            n_phases: 5,
            n_actions: 6,
            noise_level: 1.0,
            horizon: 8,
            reward_scale: 1.0,
        };
        let spec = make_noisy_recsys_spec(&config).unwrap();

        let preferred = crate::envs::StateActionPolicy {
            n_actions: 6,
            choice: (0..spec.n_states)
                .map(|s| block_item(state_mood(s, 5).0, 0, 6))
                .collect(),
        };
        let random = UniformPolicy { n_actions: 6 };
        let n = 100_000;
        let g_pref = mean_goal(&simulate(&spec, &preferred, n, 21).unwrap());
        let g_rand = mean_goal(&simulate(&spec, &random, n, 22).unwrap());

        // Session length ≤ 8 and per-step reward ≤ 2.5, so per-session
        // totals have std ≤ ~6; three standard errors of the difference
        // of means is well under 0.12.
        for i in 0..2 {
            assert!(
                (g_pref[i] - g_rand[i]).abs() < 0.12,
                "objective {i}: preferred {} vs random {}",
                g_pref[i],
                g_rand[i]
            );
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let config = NoisyRecsysConfig {
            noise_level: 1.5,
            ..NoisyRecsysConfig::default()
        };
        assert!(make_noisy_recsys_spec(&config).is_err());
    }

    #[test]
    fn junk_modes_inflate_exactly_one_objective() {
        let config = NoisyRecsysConfig::default();
        let spec = make_noisy_recsys_spec(&config).unwrap();
        let p = config.n_phases;
        for phase in 0..p {
            for a in 0..config.n_actions {
                assert_eq!(spec.reward[phase + p][a], vec![2.5, 0.0]);
                assert_eq!(spec.reward[phase + 2 * p][a], vec![0.0, 1.2]);
            }
        }
    }

    #[test]
    fn engaged_block_earns_click_and_purchase() {
        let config = NoisyRecsysConfig::default();
        let spec = make_noisy_recsys_spec(&config).unwrap();
        for phase in 0..config.n_phases {
            for a in 0..config.n_actions {
                let expected = if in_block((a + 1) as u32, phase, config.n_actions) {
                    vec![1.0, 0.4]
                } else {
                    vec![0.0, 0.0]
                };
                assert_eq!(spec.reward[phase][a], expected, "phase {phase} action {a}");
            }
        }
    }

    #[test]
    fn forward_and_backward_neighbor_blocks_are_disjoint() {
        let config = NoisyRecsysConfig::default();
        let n = config.n_actions;
        for phase in 1..config.n_phases - 1 {
            for j in 0..block_size(n) {
                let fwd = block_item(phase + 1, j, n);
                assert!(
                    !in_block(fwd, phase - 1, n),
                    "phase {phase}: forward item {fwd} also in the backward block"
                );
            }
        }
    }

    #[test]
    fn junk_phase_walks_backward() {
        let config = NoisyRecsysConfig::default();
        let spec = make_noisy_recsys_spec(&config).unwrap();
        let p = config.n_phases;
        // From click-junk phase 4, the bulk of the transition mass goes
        // to click-junk phase 3.
        let s = 4 + p;
        let dest = 3 + p;
        assert!(spec.transition[s][0][dest] > 0.5);
    }

    #[test]
    fn behavior_is_block_graded_in_every_mood() {
        let config = NoisyRecsysConfig::default();
        let policy = BehaviorPolicy::new(&config, 0);
        for state in [3usize, 3 + config.n_phases, 3 + 2 * config.n_phases] {
            let ctx = StepContext {
                session: 0,
                state,
                timestep: 1,
                history: &[],
                goal: None,
            };
            let probs = policy.action_probs(&ctx);
            let top = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0 as u32
                + 1;
            assert_eq!(top, block_item(3, 0, config.n_actions));
        }
    }
}
