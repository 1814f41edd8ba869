//! Hand-built tiny tabular specs used by the verification oracles.
//!
//! All three are small enough to enumerate exhaustively (≤ 5 states,
//! ≤ 3 actions, horizon ≤ 4), with integer rewards so achieved-goal
//! supports are exact.

use super::MomdpSpec;

/// Two states, two actions, horizon 2. Action 1 pays on the first
/// objective, action 2 on the second; state 1 doubles the stakes.
pub fn two_state_bandit() -> MomdpSpec {
    MomdpSpec {
        n_states: 2,
        n_actions: 2,
        reward_dim: 2,
        transition: vec![
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
        ],
        reward: vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        ],
        initial_dist: vec![1.0, 0.0],
        horizon: 2,
        terminal_prob: vec![vec![0.3, 0.3], vec![0.5, 0.5]],
    }
}

/// Three states in a noisy chain, two actions, horizon 4. Action 1 walks
/// forward and earns on the first objective; action 2 stays and earns on
/// the second, with rising stakes along the chain.
pub fn three_state_chain() -> MomdpSpec {
    MomdpSpec {
        n_states: 3,
        n_actions: 2,
        reward_dim: 2,
        transition: vec![
            vec![vec![0.1, 0.9, 0.0], vec![0.8, 0.2, 0.0]],
            vec![vec![0.0, 0.1, 0.9], vec![0.1, 0.8, 0.1]],
            vec![vec![0.2, 0.0, 0.8], vec![0.0, 0.2, 0.8]],
        ],
        reward: vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        ],
        initial_dist: vec![1.0, 0.0, 0.0],
        horizon: 4,
        terminal_prob: vec![vec![0.2, 0.2], vec![0.2, 0.2], vec![0.4, 0.4]],
    }
}

/// Five states on a ring, three actions, horizon 3. Action 3 is a risky
/// jump with a high payoff on both objectives but a high quit rate.
/// Stakes grow along the ring so distinct initial states are
/// distinguishable from the achieved goals.
pub fn five_state_ring() -> MomdpSpec {
    let n = 5;
    let mut transition = vec![vec![vec![0.0; n]; 3]; n];
    let mut reward = vec![vec![vec![0.0; 2]; 3]; n];
    let mut terminal = vec![vec![0.0; 3]; n];
    for s in 0..n {
        let stake = 1.0 + 0.5 * s as f64;
        // Action 1: step clockwise, click reward.
        transition[s][0][(s + 1) % n] = 1.0;
        reward[s][0] = vec![stake, 0.0];
        terminal[s][0] = 0.2;
        // Action 2: step counter-clockwise, purchase reward.
        transition[s][1][(s + n - 1) % n] = 1.0;
        reward[s][1] = vec![0.0, stake];
        terminal[s][1] = 0.2;
        // Action 3: noisy jump, both rewards, likely quit.
        for (s2, p) in transition[s][2].iter_mut().enumerate() {
            *p = if s2 == s { 0.0 } else { 0.25 };
        }
        reward[s][2] = vec![2.0, 2.0];
        terminal[s][2] = 0.7;
    }
    MomdpSpec {
        n_states: n,
        n_actions: 3,
        reward_dim: 2,
        transition,
        reward,
        initial_dist: vec![0.2; 5],
        horizon: 3,
        terminal_prob: terminal,
    }
}

/// The three oracle specs with display names.
pub fn oracle_specs() -> Vec<(&'static str, MomdpSpec)> {
    vec![
        ("two_state_bandit", two_state_bandit()),
        ("three_state_chain", three_state_chain()),
        ("five_state_ring", five_state_ring()),
    ]
}
