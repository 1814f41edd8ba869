//! Acceptance suite: every shipping criterion exercised end to end, one
//! test per criterion, each printing a PASS/FAIL line (run with
//! `--nocapture` to see them).
//!
//! The end-to-end criteria share one experiment matrix (five seeds of
//! synthetic data, four trained policies per seed, evaluations under
//! both goal strategies and a λ grid), built once in a lazy fixture.

use std::sync::OnceLock;
use std::time::Instant;

use mogcsl::data::{self, GoalVector, Step, Trajectory};
use mogcsl::envs::{
    self, BehaviorPolicy, NoisyRecsysConfig, UniformPolicy, generate_denoise_dataset,
    make_noisy_recsys_spec, presets, simulate,
};
use mogcsl::eval::{self, DenoiseVariant, EvalCase};
use mogcsl::gbt::GbtConfig;
use mogcsl::goalsel::{self, CvaeConfig, StatStrategyConfig};
use mogcsl::oracle;
use mogcsl::policy::{self, EncoderKind, GoalMode, PolicyConfig, PolicyModel};
use mogcsl_cli::pipeline::{self, UtilityKind};
use rand::prelude::*;
use rand_pcg::Pcg64Mcg;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const SESSIONS_PER_SEED: usize = 3000;
const EVAL_KS: [usize; 3] = [5, 10, 20];
const STAT_LAMBDA: f64 = 1.5;
const MOPRL_WEIGHTS: [[f64; 2]; 3] = [[0.1, 0.9], [0.5, 0.5], [0.9, 0.1]];
const SWEEP_LAMBDAS: [f64; 4] = [1.0, 1.5, 2.0, 8.0];

fn policy_config(seed: u64) -> PolicyConfig {
    PolicyConfig {
        n_items: 20,
        reward_dim: 2,
        window: 10,
        item_embed_dim: 16,
        goal_embed_dim: 16,
        timestep_embed_dim: 16,
        encoder: EncoderKind::Transformer {
            depth: 1,
            heads: 1,
            ffn_hidden: 32,
        },
        attention_block: true,
        mlp_hidden_sizes: vec![32],
        learning_rate: 3e-3,
        batch_size: 256,
        max_epochs: 25,
        patience: 5,
        seed,
        goal_mode: GoalMode::Vector,
        standardize_goals: true,
        max_timestep: 20,
    }
}

fn cvae_config(seed: u64) -> CvaeConfig {
    CvaeConfig {
        latent_dim: 8,
        hidden_dim: 64,
        decoder_variance: 0.25,
        learning_rate: 1e-3,
        batch_size: 256,
        max_epochs: 60,
        seed,
    }
}

/// HR@5 per objective of one evaluation.
#[derive(Debug, Clone, Copy)]
struct Hr5 {
    click: f64,
    purchase: f64,
}

fn hr5(run: &eval::SingleEval) -> Hr5 {
    Hr5 {
        click: run.hr[0][&5],
        purchase: run.hr[1][&5],
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Everything the end-to-end criteria need, per reward scale.
struct ScaleResults {
    /// Per seed: vector-goal model HR@5 under the statistical strategy.
    stat: Vec<Hr5>,
    /// Per seed: vector-goal model HR@5 under the CVAE chooser.
    cvae: Vec<Hr5>,
}

struct Matrix {
    base_stat: Vec<Hr5>,
    base_cvae: Vec<Hr5>,
    /// Per weight vector, per seed.
    moprl: Vec<Vec<Hr5>>,
    /// Per λ of the sweep, per seed (vector model).
    sweep: Vec<Vec<Hr5>>,
    scaled: ScaleResults,
}

fn train_model(
    trajs: &[Trajectory],
    seed: u64,
    goal_mode: GoalMode,
) -> (PolicyModel, Vec<Trajectory>, Vec<Trajectory>, data::DatasetStats) {
    let (train_trajs, valid_trajs, test_trajs) =
        data::split(trajs, (0.8, 0.1, 0.1), seed).expect("split");
    let mut cfg = policy_config(seed);
    cfg.goal_mode = goal_mode;
    let mut model = PolicyModel::new(cfg).expect("model");
    let train_steps =
        pipeline::prepare_training_steps(&train_trajs, &model.config.goal_mode).expect("steps");
    let valid_steps =
        pipeline::prepare_training_steps(&valid_trajs, &model.config.goal_mode).expect("steps");
    policy::train(&mut model, &train_steps, &valid_steps).expect("train");
    let stats = data::compute_stats(&train_trajs).expect("stats");
    (model, train_trajs, test_trajs, stats)
}

fn eval_stat(
    model: &PolicyModel,
    test: &[Trajectory],
    stats: &data::DatasetStats,
    lambda: f64,
) -> Hr5 {
    let cases = pipeline::build_cases_stat(
        test,
        stats,
        &StatStrategyConfig::per_timestep(lambda),
        model,
    )
    .expect("cases");
    hr5(&pipeline::score(model, &cases, &EVAL_KS).expect("score"))
}

fn run_scale(scale: f64, with_sweep_and_baselines: bool) -> (ScaleResults, Vec<Vec<Hr5>>, Vec<Vec<Hr5>>) {
    let env = NoisyRecsysConfig {
        reward_scale: scale,
        ..NoisyRecsysConfig::default()
    };
    let spec = make_noisy_recsys_spec(&env).expect("spec");

    let mut stat = Vec::new();
    let mut cvae = Vec::new();
    let mut moprl: Vec<Vec<Hr5>> = vec![Vec::new(); MOPRL_WEIGHTS.len()];
    let mut sweep: Vec<Vec<Hr5>> = vec![Vec::new(); SWEEP_LAMBDAS.len()];

    for &seed in &SEEDS {
        let behavior = BehaviorPolicy::new(&env, seed);
        let trajs = simulate(&spec, &behavior, SESSIONS_PER_SEED, seed).expect("simulate");

        let (model, train_trajs, test, stats) = train_model(&trajs, seed, GoalMode::Vector);
        stat.push(eval_stat(&model, &test, &stats, STAT_LAMBDA));

        // CVAE chooser on the same checkpoint.
        let train_steps = data::relabel_all(&train_trajs);
        let (pair, _) =
            goalsel::train_cvaes(&train_steps, &model, cvae_config(seed + 100)).expect("cvaes");
        let (cases, _) = pipeline::build_cases_cvae(
            &test,
            &pair,
            &model,
            20,
            64,
            seed + 100,
            true,
            UtilityKind::Balanced,
        )
        .expect("cvae cases");
        cvae.push(hr5(&pipeline::score(&model, &cases, &EVAL_KS).expect("score")));

        if with_sweep_and_baselines {
            for (li, &lambda) in SWEEP_LAMBDAS.iter().enumerate() {
                sweep[li].push(eval_stat(&model, &test, &stats, lambda));
            }
            for (wi, w) in MOPRL_WEIGHTS.iter().enumerate() {
                let (m, _, test_w, stats_w) = train_model(
                    &trajs,
                    seed,
                    GoalMode::Scalar {
                        weights: w.to_vec(),
                    },
                );
                moprl[wi].push(eval_stat(&m, &test_w, &stats_w, STAT_LAMBDA));
            }
        }
    }
    (ScaleResults { stat, cvae }, moprl, sweep)
}

fn matrix() -> &'static Matrix {
    static MATRIX: OnceLock<Matrix> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let (base, moprl, sweep) = run_scale(1.0, true);
        let (scaled, _, _) = run_scale(5.0, false);
        Matrix {
            base_stat: base.stat,
            base_cvae: base.cvae,
            moprl,
            sweep,
            scaled,
        }
    })
}

#[test]
fn criterion_1_denoising_reproduction() {
    let started = Instant::now();
    let samples = generate_denoise_dataset(100_000, 11);
    let budget = GbtConfig::default();
    let table = eval::run_denoise_comparison(&samples, &budget, &[0, 1, 2, 3, 4], 0.1)
        .expect("comparison");

    let get = |v: DenoiseVariant| {
        let r = table.result(v);
        (
            r.accuracy.clone().expect("accuracy"),
            r.log_loss.clone().expect("log loss"),
        )
    };
    let (acc_s, ll_s) = get(DenoiseVariant::StateOnly);
    let (acc_ug, ll_ug) = get(DenoiseVariant::SingleGoal);
    let (acc_mg, ll_mg) = get(DenoiseVariant::MultiGoal);

    let ordering = acc_mg.mean > acc_ug.mean && acc_ug.mean > acc_s.mean;
    let separated = acc_mg.mean - acc_mg.std > acc_ug.mean + acc_ug.std
        && acc_ug.mean - acc_ug.std > acc_s.mean + acc_s.std;
    let ll_ordering = ll_mg.mean < ll_s.mean;
    let acc_bands = (acc_mg.mean - 0.0634).abs() <= 0.01
        && (acc_ug.mean - 0.0598).abs() <= 0.01
        && (acc_s.mean - 0.0576).abs() <= 0.01;
    let ll_bands = (ll_mg.mean - 3.6603).abs() <= 0.15
        && (ll_ug.mean - 3.7262).abs() <= 0.15
        && (ll_s.mean - 3.7595).abs() <= 0.15;
    let elapsed = started.elapsed().as_secs_f64();
    let within_time = elapsed <= 15.0 * 60.0;

    let pass = ordering && separated && ll_ordering && acc_bands && ll_bands && within_time;
    println!(
        "criterion 1 (denoising reproduction): {} — acc mg/ug/s {:.4}±{:.4} / {:.4}±{:.4} / {:.4}±{:.4}; \
         logloss mg/ug/s {:.4} / {:.4} / {:.4}; {:.0}s",
        if pass { "PASS" } else { "FAIL" },
        acc_mg.mean,
        acc_mg.std,
        acc_ug.mean,
        acc_ug.std,
        acc_s.mean,
        acc_s.std,
        ll_mg.mean,
        ll_ug.mean,
        ll_s.mean,
        elapsed
    );
    assert!(ordering, "accuracy ordering violated");
    assert!(separated, "±1σ intervals overlap");
    assert!(ll_ordering, "log-loss ordering violated");
    assert!(acc_bands, "accuracy outside the ±0.01 bands");
    assert!(ll_bands, "log-loss outside the ±0.15 bands");
    assert!(within_time, "exceeded the 15-minute budget");
}

#[test]
fn criterion_2_theorem_verification() {
    let started = Instant::now();
    let mut all_pass = true;
    let mut max_tv: f64 = 0.0;
    let mut min_sens = f64::INFINITY;
    for (name, spec) in presets::oracle_specs() {
        let policy = UniformPolicy {
            n_actions: spec.n_actions,
        };
        let cases = vec![(0usize, vec![2.0; spec.reward_dim])];
        let report =
            oracle::verify_theorem1(&spec, &policy, &cases, 100_000, 5).expect("verify");
        for case in &report.cases {
            max_tv = max_tv.max(case.tv_between_runs).max(case.tv_empirical_vs_exact);
        }
        for s in &report.sensitivity {
            if s.varied == "initial_goal" {
                min_sens = min_sens.min(s.tv);
            }
        }
        all_pass &= report.pass;
        assert!(report.pass, "{name} failed: {report:?}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    let within_time = elapsed <= 5.0 * 60.0;
    let pass = all_pass && max_tv <= 0.02 && min_sens >= 0.1 && within_time;
    println!(
        "criterion 2 (achieved-goal distribution verification): {} — max TV {:.4} (≤ 0.02), \
         goal sensitivity ≥ {:.3} (≥ 0.1); {:.0}s",
        if pass { "PASS" } else { "FAIL" },
        max_tv,
        min_sens,
        elapsed
    );
    assert!(pass);
}

#[test]
fn criterion_3_relabeling_and_metric_oracles() {
    let mut violations = 0usize;

    // Backward recurrence of the relabeling over random trajectories.
    let mut rng = Pcg64Mcg::seed_from_u64(31);
    for _ in 0..1000 {
        let len = rng.random_range(1..20usize);
        let steps: Vec<Step> = (0..len)
            .map(|_| Step {
                action: rng.random_range(1..40),
                reward: vec![
                    f64::from(rng.random_range(0..5u32)),
                    f64::from(rng.random_range(0..3u32)),
                ],
            })
            .collect();
        let traj = Trajectory::new("t", steps).unwrap();
        let relabeled = data::relabel(&traj);
        for t in 0..len - 1 {
            let expected = relabeled[t + 1].goal.add(&traj.steps[t].reward);
            if relabeled[t].goal != expected {
                violations += 1;
            }
        }
        let total = traj
            .steps
            .iter()
            .fold(GoalVector::zeros(2), |acc, s| acc.add(&s.reward));
        if relabeled[0].goal != total {
            violations += 1;
        }
    }
    let recurrence_violations = violations;

    // HR/NDCG brute-force equivalence on case sets of ≤ 100 cases.
    let mut metric_violations = 0usize;
    let mut rng = Pcg64Mcg::seed_from_u64(32);
    for _ in 0..200 {
        let n_items = rng.random_range(3..15u32);
        let n_cases = rng.random_range(1..=100usize);
        let mut items: Vec<u32> = (1..=n_items).collect();
        let cases: Vec<EvalCase> = (0..n_cases)
            .map(|_| EvalCase {
                history: vec![],
                timestep: 1,
                goal: GoalVector(vec![0.0]),
                truth: rng.random_range(1..=n_items),
                flags: vec![rng.random_range(0..4) != 0],
            })
            .collect();
        let rankings: Vec<Vec<u32>> = (0..n_cases)
            .map(|_| {
                items.shuffle(&mut rng);
                items.clone()
            })
            .collect();
        let k = rng.random_range(1..=n_items as usize);
        // Independent brute force.
        let mut n = 0.0;
        let mut hits = 0.0;
        let mut dcg = 0.0;
        for (case, ranking) in cases.iter().zip(&rankings) {
            if !case.flags[0] {
                continue;
            }
            n += 1.0;
            let rank = ranking.iter().position(|&i| i == case.truth).unwrap() + 1;
            if rank <= k {
                hits += 1.0;
                dcg += 1.0 / ((rank + 1) as f64).log2();
            }
        }
        let hr = eval::hr_at_k(&cases, &rankings, k, 0);
        let ndcg = eval::ndcg_at_k(&cases, &rankings, k, 0);
        match (hr, ndcg) {
            (None, None) if n == 0.0 => {}
            (Some(h), Some(d)) if n > 0.0 => {
                if (h - hits / n).abs() > 1e-12 || (d - dcg / n).abs() > 1e-12 {
                    metric_violations += 1;
                }
            }
            _ => metric_violations += 1,
        }
    }

    // Pareto non-domination against brute force on 1e4 random sets.
    let mut pareto_violations = 0usize;
    let mut rng = Pcg64Mcg::seed_from_u64(33);
    for _ in 0..10_000 {
        let n = rng.random_range(1..12usize);
        let d = rng.random_range(1..4usize);
        let vals: Vec<GoalVector> = (0..n)
            .map(|_| {
                GoalVector(
                    (0..d)
                        .map(|_| f64::from(rng.random_range(0..4u32)))
                        .collect(),
                )
            })
            .collect();
        let front = goalsel::pareto_non_dominated(&vals);
        for i in 0..n {
            let dominated = vals.iter().any(|other| {
                other.values() != vals[i].values()
                    && other
                        .values()
                        .iter()
                        .zip(vals[i].values())
                        .all(|(a, b)| a >= b)
            });
            if front.contains(&i) == dominated {
                pareto_violations += 1;
            }
        }
        // The selected candidate is never dominated.
        let cands: Vec<(GoalVector, GoalVector)> = vals
            .iter()
            .map(|v| (GoalVector(vec![0.0]), v.clone()))
            .collect();
        let choice =
            goalsel::pareto_best(&cands, &goalsel::Utility::ParetoLexicographic).unwrap();
        let dominated = vals.iter().any(|other| {
            other.values() != choice.expected_achieved.values()
                && other
                    .values()
                    .iter()
                    .zip(choice.expected_achieved.values())
                    .all(|(a, b)| a >= b)
        });
        if dominated {
            pareto_violations += 1;
        }
    }

    let pass = recurrence_violations == 0 && metric_violations == 0 && pareto_violations == 0;
    println!(
        "criterion 3 (relabeling and metric oracles): {} — violations: recurrence {}, \
         metrics {}, pareto {}",
        if pass { "PASS" } else { "FAIL" },
        recurrence_violations,
        metric_violations,
        pareto_violations
    );
    assert!(pass);
}

#[test]
fn criterion_4_gradient_check() {
    let cfg = PolicyConfig {
        n_items: 5,
        reward_dim: 2,
        window: 4,
        item_embed_dim: 8,
        goal_embed_dim: 8,
        timestep_embed_dim: 8,
        encoder: EncoderKind::Transformer {
            depth: 1,
            heads: 1,
            ffn_hidden: 8,
        },
        attention_block: true,
        mlp_hidden_sizes: vec![8],
        learning_rate: 1e-3,
        batch_size: 8,
        max_epochs: 1,
        patience: 0,
        seed: 7,
        goal_mode: GoalMode::Vector,
        standardize_goals: false,
        max_timestep: 8,
    };
    let mut model = PolicyModel::new(cfg).expect("model");
    let steps = vec![
        data::RelabeledStep {
            history: vec![1, 2],
            timestep: 3,
            action: 4,
            goal: GoalVector(vec![2.0, 1.0]),
        },
        data::RelabeledStep {
            history: vec![],
            timestep: 1,
            action: 1,
            goal: GoalVector(vec![0.0, 0.0]),
        },
        data::RelabeledStep {
            history: vec![5, 3, 2, 1],
            timestep: 5,
            action: 2,
            goal: GoalVector(vec![1.0, 3.0]),
        },
    ];
    let (_, grads) = model.loss_and_gradients(&steps).expect("gradients");

    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let n_params = model.param_summary().len();
    for pi in 0..n_params {
        let entries = grads[pi].data.len();
        for k in 0..entries {
            let orig = set_param(&mut model, pi, k, None);
            set_param(&mut model, pi, k, Some(orig + h));
            let plus = model.dataset_loss(&steps).unwrap();
            set_param(&mut model, pi, k, Some(orig - h));
            let minus = model.dataset_loss(&steps).unwrap();
            set_param(&mut model, pi, k, Some(orig));
            let fd = (plus - minus) / (2.0 * h);
            let an = grads[pi].data[k];
            let denom = fd.abs().max(an.abs());
            if denom < 1e-7 {
                continue;
            }
            let rel = (fd - an).abs() / denom.max(1e-4);
            worst = worst.max(rel);
            checked += 1;
            assert!(
                rel <= 1e-4,
                "param {pi} entry {k}: rel err {rel} (fd {fd}, analytic {an})"
            );
        }
    }
    println!(
        "criterion 4 (gradient check): PASS — {checked} entries, worst relative error {worst:.2e}"
    );
}

/// Reads or writes one parameter entry through the public summary order.
fn set_param(model: &mut PolicyModel, pi: usize, k: usize, value: Option<f64>) -> f64 {
    model.with_param_entry(pi, k, value)
}

#[test]
fn criterion_5_end_to_end_ordering() {
    let m = matrix();
    let ours_click = mean(m.base_stat.iter().map(|h| h.click));
    let ours_purchase = mean(m.base_stat.iter().map(|h| h.purchase));
    let mut pass = true;
    let mut lines = Vec::new();
    for (wi, w) in MOPRL_WEIGHTS.iter().enumerate() {
        let b_click = mean(m.moprl[wi].iter().map(|h| h.click));
        let b_purchase = mean(m.moprl[wi].iter().map(|h| h.purchase));
        let ok = ours_click > b_click && ours_purchase > b_purchase;
        pass &= ok;
        lines.push(format!(
            "w=({},{}) -> ({b_click:.4}, {b_purchase:.4}){}",
            w[0],
            w[1],
            if ok { "" } else { " VIOLATION" }
        ));
    }
    println!(
        "criterion 5 (vector-goal beats scalarized baselines): {} — ours ({ours_click:.4}, {ours_purchase:.4}) vs {}",
        if pass { "PASS" } else { "FAIL" },
        lines.join("; ")
    );
    assert!(pass);
}

#[test]
fn criterion_6_lambda_sweep_shape() {
    let m = matrix();
    let hr_at = |li: usize| {
        (
            mean(m.sweep[li].iter().map(|h| h.click)),
            mean(m.sweep[li].iter().map(|h| h.purchase)),
        )
    };
    let low = [hr_at(0), hr_at(1), hr_at(2)];
    let high = hr_at(3);
    let best_click = low.iter().map(|v| v.0).fold(f64::MIN, f64::max);
    let best_purchase = low.iter().map(|v| v.1).fold(f64::MIN, f64::max);
    let pass = high.0 < best_click && high.1 < best_purchase;
    println!(
        "criterion 6 (scaling-factor sweep shape): {} — λ∈{{1,1.5,2}} best ({best_click:.4}, {best_purchase:.4}); λ=8 ({:.4}, {:.4})",
        if pass { "PASS" } else { "FAIL" },
        high.0,
        high.1
    );
    assert!(pass);
}

#[test]
fn criterion_7_cvae_goal_chooser() {
    let m = matrix();
    let s_click = mean(m.base_stat.iter().map(|h| h.click));
    let s_purchase = mean(m.base_stat.iter().map(|h| h.purchase));
    let c_click = mean(m.base_cvae.iter().map(|h| h.click));
    let c_purchase = mean(m.base_cvae.iter().map(|h| h.purchase));
    let parity = ((c_click - s_click) / s_click).abs() <= 0.10
        && ((c_purchase - s_purchase) / s_purchase).abs() <= 0.10;

    let s5_click = mean(m.scaled.stat.iter().map(|h| h.click));
    let s5_purchase = mean(m.scaled.stat.iter().map(|h| h.purchase));
    let c5_click = mean(m.scaled.cvae.iter().map(|h| h.click));
    let c5_purchase = mean(m.scaled.cvae.iter().map(|h| h.purchase));
    let superiority = c5_click >= s5_click && c5_purchase >= s5_purchase;

    let pass = parity && superiority;
    println!(
        "criterion 7 (generative goal chooser): {} — base C ({c_click:.4}, {c_purchase:.4}) vs S ({s_click:.4}, {s_purchase:.4}); \
         scaled C ({c5_click:.4}, {c5_purchase:.4}) vs S ({s5_click:.4}, {s5_purchase:.4})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(parity, "base-spec parity beyond ±10%");
    assert!(superiority, "scaled spec: chooser fell below the statistical strategy");
}

#[test]
fn criterion_8_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> Vec<u8> {
        let gen_dir = dir.path().join(format!("gen-{tag}"));
        let train_dir = dir.path().join(format!("train-{tag}"));
        let eval_dir = dir.path().join(format!("eval-{tag}"));
        let env = NoisyRecsysConfig {
            n_phases: 4,
            n_actions: 8,
            ..NoisyRecsysConfig::default()
        };
        mogcsl_cli::cmd_generate(&mogcsl_cli::GenerateConfig {
            env: mogcsl_cli::config::GenerateEnv::NoisyRecsys,
            n: 300,
            seed: 9,
            out: gen_dir.clone(),
            force: false,
            recsys: env,
            behavior_epsilon: 0.15,
            denoise: envs::DenoiseConfig::default(),
        })
        .expect("generate");
        let mut policy = policy_config(4);
        policy.n_items = 8;
        policy.max_epochs = 3;
        mogcsl_cli::cmd_train(&mogcsl_cli::TrainConfig {
            data: gen_dir.join("trajectories.jsonl"),
            format: data::FileFormat::Jsonl,
            out: train_dir.clone(),
            force: false,
            seed: 4,
            split: (0.8, 0.1, 0.1),
            policy,
            items_override: 0,
        })
        .expect("train");
        mogcsl_cli::cmd_evaluate(&mogcsl_cli::EvaluateConfig {
            data: train_dir.join("splits").join("test.jsonl"),
            format: data::FileFormat::Jsonl,
            stats: train_dir.join("stats.json"),
            checkpoints: vec![train_dir.join("checkpoint.json")],
            out: eval_dir.clone(),
            force: false,
            seed: 6,
            strategy: mogcsl_cli::GoalStrategy::Stat,
            lambda: 1.5,
            stat_mode: goalsel::StatMode::PerTimestepMean,
            train_data: None,
            k_candidates: 20,
            achievable_samples: 16,
            cvae: cvae_config(1),
            reselect_each_step: false,
            utility: UtilityKind::Balanced,
            k_set: vec![5, 10, 20],
        })
        .expect("evaluate");
        std::fs::read(eval_dir.join("metrics.json")).expect("metrics")
    };
    let a = run("one");
    let b = run("two");
    let pass = a == b;
    println!(
        "criterion 8 (pipeline reproducibility): {} — {} bytes, byte-identical across two runs: {}",
        if pass { "PASS" } else { "FAIL" },
        a.len(),
        pass
    );
    assert!(pass);
}
