//! The seven subcommands. Each takes a merged run configuration,
//! validates it, performs the work, and writes its artifacts plus a
//! manifest under the run directory.

use std::fmt::Write as _;
use std::path::Path;

use mogcsl::data::{
    self, DatasetStats, FileFormat, Trajectory, load_trajectories, save_trajectories_jsonl,
};
use mogcsl::envs::{
    BehaviorPolicy, MomdpSpec, generate_denoise_dataset_with, load_denoise_csv,
    make_noisy_recsys_spec, presets, save_denoise_csv, simulate,
};
use mogcsl::eval::{
    DenoiseComparison, MetricsReport, emit_report, run_denoise_comparison,
};
use mogcsl::goalsel::{
    CvaePair, StatStrategyConfig, load_cvae_pair, save_cvae_pair, train_cvaes,
};
use mogcsl::oracle::{Theorem1Report, verify_theorem1};
use mogcsl::policy::{self, PolicyModel, TrainReport, load_model, save_model};

use crate::config::{
    self, DenoiseExpConfig, EvaluateConfig, GenerateConfig, GenerateEnv, GoalStrategy,
    RelabelConfig, SweepConfig, TrainConfig, VerifyConfig,
};
use crate::error::CliError;
use crate::pipeline;

/// Generates a synthetic dataset (trajectories or denoise samples) plus
/// a manifest with the seed and generator configuration.
pub fn cmd_generate(cfg: &GenerateConfig) -> Result<(), CliError> {
    if cfg.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    match cfg.env {
        GenerateEnv::NoisyRecsys => {
            let spec = make_noisy_recsys_spec(&cfg.recsys)?;
            let mut behavior = BehaviorPolicy::new(&cfg.recsys, cfg.seed);
            behavior.epsilon = cfg.behavior_epsilon;
            let trajs = simulate(&spec, &behavior, cfg.n, cfg.seed)?;
            save_trajectories_jsonl(&cfg.out.join("trajectories.jsonl"), &trajs)?;
            spec.save_json(&cfg.out.join("spec.json"))?;
        }
        GenerateEnv::Denoise => {
            let samples = generate_denoise_dataset_with(&cfg.denoise, cfg.n, cfg.seed);
            save_denoise_csv(&cfg.out.join("denoise.csv"), &samples)?;
        }
    }
    config::write_manifest(&cfg.out, "generate", cfg, vec![cfg.seed])?;
    Ok(())
}

/// Relabels a trajectory file into (history, timestep, action, goal)
/// tuples plus dataset statistics.
pub fn cmd_relabel(cfg: &RelabelConfig) -> Result<(), CliError> {
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    let mut trajs = load_trajectories(&cfg.input, cfg.format)?;
    if cfg.min_len > 0 || cfg.max_len > 0 {
        let max = if cfg.max_len == 0 { usize::MAX } else { cfg.max_len };
        trajs = data::filter_by_length(trajs, cfg.min_len, max);
    }
    if trajs.is_empty() {
        return Err(CliError::Usage("no trajectories after filtering".into()));
    }
    let steps = data::relabel_all(&trajs);
    data::save_relabeled_jsonl(&cfg.out.join("relabeled.jsonl"), &steps)?;
    let stats = data::compute_stats(&trajs)?;
    write_json(&cfg.out.join("stats.json"), &stats)?;
    config::write_manifest(&cfg.out, "relabel", cfg, vec![])?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(value).expect("serialization cannot fail"),
    )?;
    Ok(())
}

/// Output bundle of a training run.
pub struct TrainOutput {
    pub model: PolicyModel,
    pub report: TrainReport,
    pub stats: DatasetStats,
    pub test: Vec<Trajectory>,
}

/// Splits, relabels, trains, and writes checkpoint + loss trace + splits
/// + training-split statistics. On a non-finite loss the diagnostics are
/// written before the numeric-failure exit.
pub fn cmd_train(cfg: &TrainConfig) -> Result<TrainOutput, CliError> {
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    let trajs = load_trajectories(&cfg.data, cfg.format)?;
    if trajs.is_empty() {
        return Err(CliError::Usage("training data is empty".into()));
    }

    let (train_trajs, valid_trajs, test_trajs) = data::split(&trajs, cfg.split, cfg.seed)?;
    let mut policy_cfg = cfg.policy.clone();
    policy_cfg.seed = cfg.seed;
    policy_cfg.reward_dim = trajs[0].reward_dim();
    if policy_cfg.n_items == 0 {
        policy_cfg.n_items = if cfg.items_override > 0 {
            cfg.items_override
        } else {
            trajs
                .iter()
                .flat_map(|t| t.steps.iter().map(|s| s.action))
                .max()
                .unwrap_or(1) as usize
        };
    }
    if policy_cfg.max_timestep == 0 || policy_cfg.max_timestep == 64 {
        let max_len = trajs.iter().map(Trajectory::len).max().unwrap_or(1);
        policy_cfg.max_timestep = max_len + 8;
    }

    let train_steps = pipeline::prepare_training_steps(&train_trajs, &policy_cfg.goal_mode)?;
    let valid_steps = pipeline::prepare_training_steps(&valid_trajs, &policy_cfg.goal_mode)?;

    let mut model = PolicyModel::new(policy_cfg)?;
    let report = match policy::train(&mut model, &train_steps, &valid_steps) {
        Ok(r) => r,
        Err(e @ policy::PolicyError::NanLoss { .. }) => {
            write_json(
                &cfg.out.join("nan_diagnostics.json"),
                &serde_json::json!({ "error": e.to_string() }),
            )?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    save_model(&model, &cfg.out.join("checkpoint.json"))?;
    write_json(&cfg.out.join("train_report.json"), &report)?;

    let mut loss_csv = String::from("epoch,train_loss,valid_loss\n");
    for (i, tl) in report.train_losses.iter().enumerate() {
        let vl = report
            .valid_losses
            .get(i)
            .map_or(String::new(), |v| format!("{v:.12e}"));
        writeln!(loss_csv, "{i},{tl:.12e},{vl}").unwrap();
    }
    std::fs::write(cfg.out.join("loss.csv"), loss_csv)?;

    let splits = cfg.out.join("splits");
    std::fs::create_dir_all(&splits)?;
    save_trajectories_jsonl(&splits.join("train.jsonl"), &train_trajs)?;
    save_trajectories_jsonl(&splits.join("valid.jsonl"), &valid_trajs)?;
    save_trajectories_jsonl(&splits.join("test.jsonl"), &test_trajs)?;

    let stats = data::compute_stats(&train_trajs)?;
    write_json(&cfg.out.join("stats.json"), &stats)?;
    config::write_manifest(&cfg.out, "train", cfg, vec![cfg.seed])?;
    Ok(TrainOutput {
        model,
        report,
        stats,
        test: test_trajs,
    })
}

fn load_stats(path: &Path) -> Result<DatasetStats, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read stats {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Artifact(format!("bad stats {}: {e}", path.display())))
}

/// Evaluates checkpoints on held-out data under a goal strategy,
/// aggregating HR@k / NDCG@k per objective across checkpoints.
pub fn cmd_evaluate(cfg: &EvaluateConfig) -> Result<MetricsReport, CliError> {
    if cfg.checkpoints.is_empty() {
        return Err(CliError::Usage("at least one --checkpoint is required".into()));
    }
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    let test = load_trajectories(&cfg.data, cfg.format)?;
    if test.is_empty() {
        return Err(CliError::Usage("evaluation data is empty".into()));
    }
    let stats = load_stats(&cfg.stats)?;

    let mut runs = Vec::with_capacity(cfg.checkpoints.len());
    for (i, ckpt) in cfg.checkpoints.iter().enumerate() {
        let model = load_model(ckpt)?;
        let run = match cfg.strategy {
            GoalStrategy::Stat => {
                let strat = StatStrategyConfig {
                    factor: cfg.lambda,
                    mode: cfg.stat_mode,
                };
                let cases = pipeline::build_cases_stat(&test, &stats, &strat, &model)?;
                pipeline::score(&model, &cases, &cfg.k_set)?
            }
            GoalStrategy::Cvae => {
                let pair = train_or_load_cvaes(cfg, &model, i)?;
                let (cases, audit) = pipeline::build_cases_cvae(
                    &test,
                    &pair,
                    &model,
                    cfg.k_candidates,
                    cfg.achievable_samples,
                    cfg.seed.wrapping_add(i as u64),
                    cfg.reselect_each_step,
                    cfg.utility,
                )?;
                write_json(&cfg.out.join(format!("goal_audit_{i}.json")), &audit)?;
                pipeline::score(&model, &cases, &cfg.k_set)?
            }
        };
        runs.push(run);
    }
    let report = MetricsReport::aggregate(&runs)?;
    for (format, name) in config::REPORT_FORMATS {
        emit_report(&report, &cfg.out.join(name), format)?;
    }
    config::write_manifest(
        &cfg.out,
        "evaluate",
        cfg,
        (0..cfg.checkpoints.len() as u64)
            .map(|i| cfg.seed.wrapping_add(i))
            .collect(),
    )?;
    Ok(report)
}

fn train_or_load_cvaes(
    cfg: &EvaluateConfig,
    model: &PolicyModel,
    index: usize,
) -> Result<CvaePair, CliError> {
    let ckpt_path = cfg.out.join(format!("cvae_{index}.json"));
    if ckpt_path.exists() {
        return Ok(load_cvae_pair(&ckpt_path)?);
    }
    let train_path = cfg.train_data.as_ref().ok_or_else(|| {
        CliError::Usage("--goal-strategy cvae requires --train-data (the train split)".into())
    })?;
    let train = load_trajectories(train_path, cfg.format)?;
    let steps = data::relabel_all(&train);
    let mut cvae_cfg = cfg.cvae.clone();
    cvae_cfg.seed = cfg.seed.wrapping_add(index as u64);
    let (pair, trace) = train_cvaes(&steps, model, cvae_cfg)?;
    save_cvae_pair(&pair, &ckpt_path)?;
    write_json(&cfg.out.join(format!("cvae_trace_{index}.json")), &trace)?;
    Ok(pair)
}

/// Runs the statistical strategy across a λ grid, writing one metrics
/// row per (λ, objective, metric, k).
pub fn cmd_sweep_lambda(cfg: &SweepConfig) -> Result<(), CliError> {
    if cfg.lambdas.is_empty() {
        return Err(CliError::Usage("at least one lambda is required".into()));
    }
    if cfg.evaluate.checkpoints.is_empty() {
        return Err(CliError::Usage("at least one --checkpoint is required".into()));
    }
    config::prepare_out_dir(&cfg.evaluate.out, cfg.evaluate.force)?;
    let test = load_trajectories(&cfg.evaluate.data, cfg.evaluate.format)?;
    let stats = load_stats(&cfg.evaluate.stats)?;

    let mut csv = String::from("lambda,objective,metric,k,mean,std\n");
    let mut reports = Vec::new();
    for &lambda in &cfg.lambdas {
        let mut runs = Vec::new();
        for ckpt in &cfg.evaluate.checkpoints {
            let model = load_model(ckpt)?;
            let strat = StatStrategyConfig {
                factor: lambda,
                mode: cfg.evaluate.stat_mode,
            };
            let cases = pipeline::build_cases_stat(&test, &stats, &strat, &model)?;
            runs.push(pipeline::score(&model, &cases, &cfg.evaluate.k_set)?);
        }
        let report = MetricsReport::aggregate(&runs)?;
        for obj in &report.objectives {
            for (metric, map) in [("hr", &obj.hr), ("ndcg", &obj.ndcg)] {
                for (k, s) in map {
                    writeln!(
                        csv,
                        "{lambda},{},{metric},{k},{:.12e},{:.12e}",
                        obj.objective, s.mean, s.std
                    )
                    .unwrap();
                }
            }
        }
        reports.push((lambda, report));
    }
    std::fs::write(cfg.evaluate.out.join("sweep.csv"), csv)?;
    write_json(&cfg.evaluate.out.join("sweep.json"), &reports)?;
    config::write_manifest(&cfg.evaluate.out, "sweep-lambda", cfg, vec![cfg.evaluate.seed])?;
    Ok(())
}

/// Runs the three-variant denoising comparison on a generated dataset.
pub fn cmd_denoise_exp(cfg: &DenoiseExpConfig) -> Result<DenoiseComparison, CliError> {
    if cfg.n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    let samples = load_denoise_csv(&cfg.data)?;
    let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|i| cfg.base_seed + i).collect();
    let table = run_denoise_comparison(&samples, &cfg.budget, &seeds, cfg.train_fraction)?;
    std::fs::write(cfg.out.join("denoise_table.csv"), table.to_csv())?;
    std::fs::write(cfg.out.join("denoise_table.md"), table.to_markdown())?;
    write_json(&cfg.out.join("denoise_report.json"), &table)?;
    config::write_manifest(&cfg.out, "denoise-exp", cfg, seeds)?;
    Ok(table)
}

/// Verifies the achieved-goal distribution claims on the built-in specs
/// (or one explicit spec). Exits with the numeric-failure code when a
/// check fails.
pub fn cmd_verify_theorem1(cfg: &VerifyConfig) -> Result<Vec<(String, Theorem1Report)>, CliError> {
    config::prepare_out_dir(&cfg.out, cfg.force)?;
    let specs: Vec<(String, MomdpSpec)> = match &cfg.spec {
        Some(path) => vec![(
            path.display().to_string(),
            MomdpSpec::load_json(path)?,
        )],
        None => presets::oracle_specs()
            .into_iter()
            .map(|(name, spec)| (name.to_string(), spec))
            .collect(),
    };

    let mut reports = Vec::with_capacity(specs.len());
    for (name, spec) in specs {
        let policy = mogcsl::envs::UniformPolicy {
            n_actions: spec.n_actions,
        };
        let cases = vec![(0usize, vec![2.0; spec.reward_dim])];
        let report = verify_theorem1(&spec, &policy, &cases, cfg.n, cfg.seed)?;
        reports.push((name, report));
    }
    write_json(&cfg.out.join("theorem1_report.json"), &reports)?;
    config::write_manifest(&cfg.out, "verify-theorem1", cfg, vec![cfg.seed])?;
    if reports.iter().any(|(_, r)| !r.pass) {
        return Err(CliError::Numeric(
            "achieved-goal distribution verification failed (see theorem1_report.json)".into(),
        ));
    }
    Ok(reports)
}

/// Loads a trajectory file with its sibling format.
pub fn load_data(path: &Path, format: FileFormat) -> Result<Vec<Trajectory>, CliError> {
    Ok(load_trajectories(path, format)?)
}
