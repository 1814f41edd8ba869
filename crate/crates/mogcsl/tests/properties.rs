//! Property suites over the relabeling arithmetic, metric definitions,
//! and Pareto selection.

use proptest::prelude::*;

use mogcsl::data::{self, GoalVector, Step, Trajectory};
use mogcsl::eval::{self, EvalCase};
use mogcsl::goalsel;

fn trajectory_strategy() -> impl Strategy<Value = Trajectory> {
    let step = (1u32..40, prop::collection::vec(0u32..5, 2))
        .prop_map(|(action, r)| Step {
            action,
            reward: r.into_iter().map(f64::from).collect(),
        });
    prop::collection::vec(step, 1..20)
        .prop_map(|steps| Trajectory::new("prop", steps).unwrap())
}

proptest! {
    /// The goal at t equals the reward at t plus the goal at t+1,
    /// exactly, for integer rewards.
    #[test]
    fn relabel_backward_recurrence(traj in trajectory_strategy()) {
        let steps = data::relabel(&traj);
        for t in 0..traj.len() - 1 {
            let expected = steps[t + 1].goal.add(&traj.steps[t].reward);
            prop_assert_eq!(&steps[t].goal, &expected);
        }
    }

    /// The first goal is the componentwise total of all rewards.
    #[test]
    fn relabel_first_goal_is_total(traj in trajectory_strategy()) {
        let steps = data::relabel(&traj);
        let mut total = GoalVector::zeros(traj.reward_dim());
        for s in &traj.steps {
            total = total.add(&s.reward);
        }
        prop_assert_eq!(&steps[0].goal, &total);
    }

    /// Histories are the exact prefixes of the action sequence.
    #[test]
    fn relabel_histories_are_prefixes(traj in trajectory_strategy()) {
        let steps = data::relabel(&traj);
        for (t, s) in steps.iter().enumerate() {
            prop_assert_eq!(s.timestep, t + 1);
            prop_assert_eq!(s.history.len(), t);
            for (h, orig) in s.history.iter().zip(&traj.steps) {
                prop_assert_eq!(*h, orig.action);
            }
        }
    }

    /// Serialize -> load round-trips trajectories and relabels bit-exactly
    /// for integer rewards.
    #[test]
    fn relabel_round_trip_bit_exact(trajs in prop::collection::vec(trajectory_strategy(), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        data::save_trajectories_jsonl(&path, &trajs).unwrap();
        let loaded = data::load_trajectories(&path, data::FileFormat::Jsonl).unwrap();
        prop_assert_eq!(&loaded, &trajs);

        let steps = data::relabel_all(&trajs);
        let spath = dir.path().join("s.jsonl");
        data::save_relabeled_jsonl(&spath, &steps).unwrap();
        let loaded_steps = data::load_relabeled_jsonl(&spath).unwrap();
        prop_assert_eq!(loaded_steps, steps);
    }

    /// Stats over copies of one trajectory return its own goals exactly.
    #[test]
    fn stats_of_identical_trajectories(traj in trajectory_strategy(), copies in 1usize..5) {
        let trajs: Vec<Trajectory> = (0..copies).map(|_| traj.clone()).collect();
        let stats = data::compute_stats(&trajs).unwrap();
        let goals = data::relabel(&traj);
        prop_assert_eq!(stats.max_timestep, traj.len());
        for (t, mean) in stats.per_timestep_mean_goal.iter().enumerate() {
            prop_assert_eq!(mean, &goals[t].goal);
        }
        prop_assert_eq!(&stats.global_mean_goal, &goals[0].goal);
    }

    /// Split partitions: union equals input, parts are disjoint, and the
    /// same seed reproduces the same partition.
    #[test]
    fn split_partitions_and_reproduces(
        n in 3usize..40,
        seed in 0u64..1000,
    ) {
        let trajs: Vec<Trajectory> = (0..n)
            .map(|i| {
                Trajectory::new(
                    format!("t{i}"),
                    vec![Step { action: 1, reward: vec![1.0, 0.0] }],
                )
                .unwrap()
            })
            .collect();
        let (a1, b1, c1) = data::split(&trajs, (0.8, 0.1, 0.1), seed).unwrap();
        let (a2, b2, c2) = data::split(&trajs, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert_eq!(&a1, &a2);
        prop_assert_eq!(&b1, &b2);
        prop_assert_eq!(&c1, &c2);

        let mut ids: Vec<&str> = a1.iter().chain(&b1).chain(&c1).map(|t| t.id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
    }
}

fn goal_vec_strategy(dim: usize) -> impl Strategy<Value = GoalVector> {
    prop::collection::vec(0u32..6, dim).prop_map(|v| GoalVector(v.into_iter().map(f64::from).collect()))
}

proptest! {
    /// The non-dominated set agrees with a brute-force dominance scan,
    /// and the selected candidate is never dominated.
    #[test]
    fn pareto_front_matches_brute_force(
        vals in prop::collection::vec(goal_vec_strategy(2), 1..15)
    ) {
        let front = goalsel::pareto_non_dominated(&vals);
        prop_assert!(!front.is_empty());
        for i in 0..vals.len() {
            let dominated = vals.iter().any(|other| {
                other.values() != vals[i].values()
                    && other.values().iter().zip(vals[i].values()).all(|(a, b)| a >= b)
            });
            prop_assert_eq!(front.contains(&i), !dominated, "index {}", i);
        }

        let cands: Vec<(GoalVector, GoalVector)> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (GoalVector(vec![i as f64]), v.clone()))
            .collect();
        let choice = goalsel::pareto_best(&cands, &goalsel::Utility::ParetoLexicographic).unwrap();
        let chosen = &choice.expected_achieved;
        let dominated = vals.iter().any(|other| {
            other.values() != chosen.values()
                && other.values().iter().zip(chosen.values()).all(|(a, b)| a >= b)
        });
        prop_assert!(!dominated);
    }

    /// HR@k and NDCG@k are non-decreasing in k and NDCG never exceeds HR.
    #[test]
    fn metric_monotonicity(
        truths in prop::collection::vec(1u32..9, 1..30),
        seed in 0u64..500,
    ) {
        use rand::prelude::*;
        use rand_pcg::Pcg64Mcg;
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let mut items: Vec<u32> = (1..=8).collect();
        let cases: Vec<EvalCase> = truths
            .iter()
            .map(|&t| EvalCase {
                history: vec![],
                timestep: 1,
                goal: GoalVector(vec![0.0]),
                truth: t,
                flags: vec![true],
            })
            .collect();
        let rankings: Vec<Vec<u32>> = truths
            .iter()
            .map(|_| {
                items.shuffle(&mut rng);
                items.clone()
            })
            .collect();
        let mut prev_hr = 0.0;
        let mut prev_ndcg = 0.0;
        for k in 1..=8usize {
            let hr = eval::hr_at_k(&cases, &rankings, k, 0).unwrap();
            let ndcg = eval::ndcg_at_k(&cases, &rankings, k, 0).unwrap();
            prop_assert!(hr >= prev_hr - 1e-12);
            prop_assert!(ndcg >= prev_ndcg - 1e-12);
            prop_assert!(ndcg <= hr + 1e-12);
            prop_assert!((0.0..=1.0).contains(&hr));
            prop_assert!((0.0..=1.0).contains(&ndcg));
            prev_hr = hr;
            prev_ndcg = ndcg;
        }
    }
}
