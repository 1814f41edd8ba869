//! Pipeline glue shared by the commands and the experiment harness:
//! building evaluation cases from held-out trajectories under each goal
//! strategy, and scoring them.

use mogcsl::data::{DatasetStats, GoalVector, RelabeledStep, Trajectory, relabel};
use mogcsl::eval::{EvalCase, SingleEval, evaluate_cases};
use mogcsl::goalsel::{
    CvaePair, GoalChoice, StatStrategyConfig, Utility, choose_goal, statistical_goal,
};
use serde::{Deserialize, Serialize};
use mogcsl::policy::{GoalMode, PolicyModel};

use crate::error::CliError;

/// Objective flags of a logged step: the interaction counts toward every
/// objective whose reward component is positive.
fn flags_of(reward: &[f64]) -> Vec<bool> {
    reward.iter().map(|&r| r > 0.0).collect()
}

/// Converts the model-facing goal: vector models take the goal as-is,
/// scalarized models take its dot product with their training weights.
fn model_goal(model: &PolicyModel, goal: &GoalVector) -> GoalVector {
    match &model.config.goal_mode {
        GoalMode::Vector => goal.clone(),
        GoalMode::Scalar { weights } => GoalVector(vec![goal.dot(weights)]),
    }
}

/// Builds evaluation cases under the statistical strategy: the goal at
/// timestep t is λ × the training-set statistic at t.
pub fn build_cases_stat(
    test: &[Trajectory],
    stats: &DatasetStats,
    cfg: &StatStrategyConfig,
    model: &PolicyModel,
) -> Result<Vec<EvalCase>, CliError> {
    let mut cases = Vec::new();
    for traj in test {
        for step in relabel(traj) {
            let goal = statistical_goal(stats, step.timestep, cfg)?;
            cases.push(EvalCase {
                history: step.history,
                timestep: step.timestep,
                goal: model_goal(model, &goal),
                truth: step.action,
                flags: flags_of(&traj.steps[step.timestep - 1].reward),
            });
        }
    }
    Ok(cases)
}

/// Which tie-break the CVAE chooser applies within the non-dominated
/// set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    /// Lexicographic maximum, first objective first.
    Lexicographic,
    /// Largest standardized component sum (no objective's scale
    /// dominates).
    Balanced,
}

impl UtilityKind {
    pub fn build(&self, pair: &CvaePair) -> Utility {
        match self {
            UtilityKind::Lexicographic => Utility::ParetoLexicographic,
            UtilityKind::Balanced => pair.balanced_utility(),
        }
    }
}

/// Builds evaluation cases under the CVAE strategy. By default the goal
/// is chosen once at session start and decremented by each observed
/// reward; with `reselect_each_step` the chooser runs at every step.
/// Returns the cases and the per-selection audit trail.
#[allow(clippy::too_many_arguments)]
pub fn build_cases_cvae(
    test: &[Trajectory],
    pair: &CvaePair,
    model: &PolicyModel,
    k: usize,
    n_samples: usize,
    seed: u64,
    reselect_each_step: bool,
    utility_kind: UtilityKind,
) -> Result<(Vec<EvalCase>, Vec<GoalChoice>), CliError> {
    if !matches!(model.config.goal_mode, GoalMode::Vector) {
        return Err(CliError::Usage(
            "the CVAE strategy applies to vector-goal models".into(),
        ));
    }
    let utility = utility_kind.build(pair);
    let mut cases = Vec::new();
    let mut audit = Vec::new();
    for (ti, traj) in test.iter().enumerate() {
        let steps = relabel(traj);
        let mut current: Option<GoalVector> = None;
        for step in steps {
            let goal = if reselect_each_step || current.is_none() {
                let state = model.state_embedding(&step.history, step.timestep)?;
                let choice = choose_goal(
                    pair,
                    &state,
                    k,
                    n_samples,
                    &utility,
                    seed.wrapping_add(ti as u64).wrapping_add((step.timestep as u64) << 32),
                )?;
                let g = choice.chosen_input_goal.clone();
                audit.push(choice);
                g
            } else {
                current.take().unwrap()
            };
            let reward = &traj.steps[step.timestep - 1].reward;
            current = Some(goal.sub(reward));
            cases.push(EvalCase {
                history: step.history,
                timestep: step.timestep,
                goal,
                truth: step.action,
                flags: flags_of(reward),
            });
        }
    }
    Ok((cases, audit))
}

/// Scores one checkpoint on prepared cases.
pub fn score(
    model: &PolicyModel,
    cases: &[EvalCase],
    ks: &[usize],
) -> Result<SingleEval, CliError> {
    Ok(evaluate_cases(model, cases, ks)?)
}

/// Relabeled steps of a whole dataset, optionally scalarized for MOPRL
/// training.
pub fn prepare_training_steps(
    trajs: &[Trajectory],
    goal_mode: &GoalMode,
) -> Result<Vec<RelabeledStep>, CliError> {
    let steps = mogcsl::data::relabel_all(trajs);
    match goal_mode {
        GoalMode::Vector => Ok(steps),
        GoalMode::Scalar { weights } => {
            Ok(mogcsl::policy::scalarize_goals(&steps, weights)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mogcsl::data::Step;
    use mogcsl::policy::{EncoderKind, PolicyConfig};

    fn tiny_model() -> PolicyModel {
        PolicyModel::new(PolicyConfig {
            n_items: 4,
            reward_dim: 2,
            window: 3,
            item_embed_dim: 4,
            goal_embed_dim: 4,
            timestep_embed_dim: 4,
            encoder: EncoderKind::Transformer {
                depth: 1,
                heads: 1,
                ffn_hidden: 4,
            },
            attention_block: true,
            mlp_hidden_sizes: vec![],
            max_timestep: 4,
            ..PolicyConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn stat_cases_carry_scaled_goals_and_flags() {
        let trajs = vec![
            Trajectory::new(
                "a",
                vec![
                    Step { action: 1, reward: vec![1.0, 0.0] },
                    Step { action: 2, reward: vec![0.0, 1.0] },
                ],
            )
            .unwrap(),
        ];
        let stats = mogcsl::data::compute_stats(&trajs).unwrap();
        let model = tiny_model();
        let cases = build_cases_stat(
            &trajs,
            &stats,
            &StatStrategyConfig::per_timestep(2.0),
            &model,
        )
        .unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].goal.values(), &[2.0, 2.0]); // 2 x g1=(1,1)
        assert_eq!(cases[0].flags, vec![true, false]);
        assert_eq!(cases[1].flags, vec![false, true]);
        assert_eq!(cases[1].timestep, 2);
    }

    #[test]
    fn scalar_model_gets_scalarized_goals() {
        let trajs = vec![Trajectory::new(
            "a",
            vec![Step { action: 1, reward: vec![2.0, 1.0] }],
        )
        .unwrap()];
        let stats = mogcsl::data::compute_stats(&trajs).unwrap();
        let mut cfg = tiny_model().config;
        cfg.goal_mode = GoalMode::Scalar {
            weights: vec![0.5, 0.5],
        };
        let model = PolicyModel::new(cfg).unwrap();
        let cases = build_cases_stat(
            &trajs,
            &stats,
            &StatStrategyConfig::per_timestep(1.0),
            &model,
        )
        .unwrap();
        assert_eq!(cases[0].goal.values(), &[1.5]);
    }
}
