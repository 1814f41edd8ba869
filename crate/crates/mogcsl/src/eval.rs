//! Per-objective top-k ranking metrics, the three-classifier denoising
//! comparison, and report emission.
//!
//! HR@k is the fraction of cases whose ground-truth action appears in the
//! top k ranked items; NDCG@k discounts the hit by its position
//! (`1/log2(rank+1)`, single relevant item, ideal DCG 1). Both are
//! computed per objective over the cases flagged for that objective, and
//! reported as mean ± std across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::GoalVector;
use crate::envs::DenoiseSample;
use crate::gbt::{self, GbtConfig, GbtError};
use crate::policy::{PolicyError, PolicyModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

/// One held-out interaction to score: the context the model sees, the
/// goal used at inference, the logged action, and which objectives the
/// interaction counts toward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCase {
    pub history: Vec<u32>,
    pub timestep: usize,
    /// The inference-time conditioning goal (already selected by a goal
    /// strategy).
    pub goal: GoalVector,
    /// Ground-truth action in `[1, N]`.
    pub truth: u32,
    /// `flags[j]` marks the case as counting toward objective j.
    pub flags: Vec<bool>,
}

/// Items sorted by predicted probability, descending; ties break toward
/// the smaller item id.
pub fn rank_items(probs: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (1..=probs.len() as u32).collect();
    order.sort_by(|&a, &b| {
        probs[(b - 1) as usize]
            .partial_cmp(&probs[(a - 1) as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

fn rank_of(ranking: &[u32], truth: u32) -> Option<usize> {
    ranking.iter().position(|&item| item == truth).map(|p| p + 1)
}

/// HR@k over the cases flagged for the objective; `None` when no case is
/// flagged (absent, not zero).
pub fn hr_at_k(
    cases: &[EvalCase],
    rankings: &[Vec<u32>],
    k: usize,
    objective: usize,
) -> Option<f64> {
    assert_eq!(cases.len(), rankings.len());
    let mut n = 0usize;
    let mut hits = 0usize;
    for (case, ranking) in cases.iter().zip(rankings) {
        if !case.flags.get(objective).copied().unwrap_or(false) {
            continue;
        }
        n += 1;
        if rank_of(ranking, case.truth).is_some_and(|r| r <= k) {
            hits += 1;
        }
    }
    (n > 0).then(|| hits as f64 / n as f64)
}

/// NDCG@k (single relevant item) over the cases flagged for the
/// objective; `None` when no case is flagged.
pub fn ndcg_at_k(
    cases: &[EvalCase],
    rankings: &[Vec<u32>],
    k: usize,
    objective: usize,
) -> Option<f64> {
    assert_eq!(cases.len(), rankings.len());
    let mut n = 0usize;
    let mut total = 0.0;
    for (case, ranking) in cases.iter().zip(rankings) {
        if !case.flags.get(objective).copied().unwrap_or(false) {
            continue;
        }
        n += 1;
        if let Some(rank) = rank_of(ranking, case.truth) {
            if rank <= k {
                total += 1.0 / ((rank as f64) + 1.0).log2();
            }
        }
    }
    (n > 0).then(|| total / n as f64)
}

/// Metrics of a single evaluation run (one seed): per objective, per k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleEval {
    pub ks: Vec<usize>,
    pub reward_dim: usize,
    /// `hr[objective][k]`, absent when the objective has no cases.
    pub hr: Vec<BTreeMap<usize, f64>>,
    pub ndcg: Vec<BTreeMap<usize, f64>>,
    pub n_cases: Vec<usize>,
}

/// Ranks every case with the model and computes HR/NDCG per objective.
pub fn evaluate_cases(
    model: &PolicyModel,
    cases: &[EvalCase],
    ks: &[usize],
) -> Result<SingleEval, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::Empty("evaluation cases".into()));
    }
    let reward_dim = cases[0].flags.len();
    let inputs: Vec<(&[u32], usize, &[f64])> = cases
        .iter()
        .map(|c| (c.history.as_slice(), c.timestep, c.goal.values()))
        .collect();
    let probs = model.predict_batch(&inputs)?;
    let rankings: Vec<Vec<u32>> = probs.iter().map(|p| rank_items(p)).collect();

    let mut hr = vec![BTreeMap::new(); reward_dim];
    let mut ndcg = vec![BTreeMap::new(); reward_dim];
    let mut n_cases = vec![0usize; reward_dim];
    for (obj, (hr_map, ndcg_map)) in hr.iter_mut().zip(ndcg.iter_mut()).enumerate() {
        n_cases[obj] = cases
            .iter()
            .filter(|c| c.flags.get(obj).copied().unwrap_or(false))
            .count();
        for &k in ks {
            if let Some(v) = hr_at_k(cases, &rankings, k, obj) {
                hr_map.insert(k, v);
            }
            if let Some(v) = ndcg_at_k(cases, &rankings, k, obj) {
                ndcg_map.insert(k, v);
            }
        }
    }
    Ok(SingleEval {
        ks: ks.to_vec(),
        reward_dim,
        hr,
        ndcg,
        n_cases,
    })
}

/// Mean and standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

fn stat(values: &[f64]) -> MetricStat {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    MetricStat {
        mean,
        std: var.sqrt(),
        n_seeds: n,
    }
}

/// Per-objective aggregated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMetrics {
    pub objective: usize,
    pub n_cases: usize,
    pub hr: BTreeMap<usize, MetricStat>,
    pub ndcg: BTreeMap<usize, MetricStat>,
}

/// The aggregated evaluation report: per-objective HR@k / NDCG@k with
/// mean ± std across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub n_seeds: usize,
    pub objectives: Vec<ObjectiveMetrics>,
}

impl MetricsReport {
    /// Aggregates per-seed evaluations (all must share ks and dims).
    pub fn aggregate(runs: &[SingleEval]) -> Result<MetricsReport, EvalError> {
        if runs.is_empty() {
            return Err(EvalError::Empty("evaluation runs".into()));
        }
        let ks = runs[0].ks.clone();
        let reward_dim = runs[0].reward_dim;
        for r in runs {
            if r.ks != ks || r.reward_dim != reward_dim {
                return Err(EvalError::Config(
                    "evaluation runs disagree on ks or objective count".into(),
                ));
            }
        }
        let mut objectives = Vec::with_capacity(reward_dim);
        for obj in 0..reward_dim {
            let mut hr = BTreeMap::new();
            let mut ndcg = BTreeMap::new();
            for &k in &ks {
                let hr_vals: Vec<f64> =
                    runs.iter().filter_map(|r| r.hr[obj].get(&k).copied()).collect();
                if !hr_vals.is_empty() {
                    hr.insert(k, stat(&hr_vals));
                }
                let ndcg_vals: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.ndcg[obj].get(&k).copied())
                    .collect();
                if !ndcg_vals.is_empty() {
                    ndcg.insert(k, stat(&ndcg_vals));
                }
            }
            objectives.push(ObjectiveMetrics {
                objective: obj,
                n_cases: runs.iter().map(|r| r.n_cases[obj]).sum::<usize>() / runs.len(),
                hr,
                ndcg,
            });
        }
        Ok(MetricsReport {
            ks,
            n_seeds: runs.len(),
            objectives,
        })
    }

    /// Convenience accessor: mean HR@k for an objective.
    pub fn hr_mean(&self, objective: usize, k: usize) -> Option<f64> {
        self.objectives
            .get(objective)
            .and_then(|o| o.hr.get(&k))
            .map(|s| s.mean)
    }
}

/// Report file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

/// Writes the report losslessly (JSON/CSV keep ≥ 10 significant digits;
/// markdown mirrors the objectives × metrics table layout).
pub fn emit_report(
    report: &MetricsReport,
    path: &Path,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let text = match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serialization cannot fail")
        }
        ReportFormat::Csv => {
            let mut out = String::from("objective,metric,k,mean,std,n_seeds,n_cases\n");
            for obj in &report.objectives {
                for (metric, map) in [("hr", &obj.hr), ("ndcg", &obj.ndcg)] {
                    for (k, s) in map {
                        writeln!(
                            out,
                            "{},{metric},{k},{:.12e},{:.12e},{},{}",
                            obj.objective, s.mean, s.std, s.n_seeds, obj.n_cases
                        )
                        .unwrap();
                    }
                }
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let mut header = String::from("| objective | cases |");
            let mut rule = String::from("|---|---|");
            for &k in &report.ks {
                write!(header, " HR@{k} | NDCG@{k} |").unwrap();
                rule.push_str("---|---|");
            }
            out.push_str(&header);
            out.push('\n');
            out.push_str(&rule);
            out.push('\n');
            for obj in &report.objectives {
                let mut row = format!("| {} | {} |", obj.objective + 1, obj.n_cases);
                for &k in &report.ks {
                    for map in [&obj.hr, &obj.ndcg] {
                        match map.get(&k) {
                            Some(s) => {
                                write!(row, " {:.4}±{:.4} |", s.mean, s.std).unwrap()
                            }
                            None => row.push_str(" — |"),
                        }
                    }
                }
                out.push_str(&row);
                out.push('\n');
            }
            out
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// The three classifier input variants of the denoising comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiseVariant {
    /// State features only; blind to the goal.
    StateOnly,
    /// State plus the first goal component (a scalar-goal model).
    SingleGoal,
    /// State plus the full goal vector.
    MultiGoal,
}

impl DenoiseVariant {
    pub const ALL: [DenoiseVariant; 3] = [
        DenoiseVariant::StateOnly,
        DenoiseVariant::SingleGoal,
        DenoiseVariant::MultiGoal,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            DenoiseVariant::StateOnly => "state-only",
            DenoiseVariant::SingleGoal => "single-goal",
            DenoiseVariant::MultiGoal => "multi-goal",
        }
    }

    fn goal_features(&self) -> usize {
        match self {
            DenoiseVariant::StateOnly => 0,
            DenoiseVariant::SingleGoal => 1,
            DenoiseVariant::MultiGoal => crate::envs::GOAL_DIM,
        }
    }
}

/// Result of one variant: accuracy and multiclass log-loss, mean ± std
/// over seeds, or the error that prevented training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseVariantResult {
    pub variant: DenoiseVariant,
    pub accuracy: Option<MetricStat>,
    pub log_loss: Option<MetricStat>,
    pub per_seed: Vec<(f64, f64)>,
    pub error: Option<String>,
}

/// The full comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseComparison {
    pub n_train: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub budget: GbtConfig,
    pub variants: Vec<DenoiseVariantResult>,
}

impl DenoiseComparison {
    pub fn result(&self, variant: DenoiseVariant) -> &DenoiseVariantResult {
        self.variants.iter().find(|v| v.variant == variant).unwrap()
    }

    /// CSV matching the comparison table layout: one row per variant with
    /// accuracy and multiclass log-loss (mean and std).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,accuracy,accuracy_std,m_logloss,m_logloss_std\n");
        for v in &self.variants {
            match (&v.accuracy, &v.log_loss) {
                (Some(acc), Some(ll)) => writeln!(
                    out,
                    "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                    v.variant.label(),
                    acc.mean,
                    acc.std,
                    ll.mean,
                    ll.std
                )
                .unwrap(),
                _ => writeln!(
                    out,
                    "{},,,,{}",
                    v.variant.label(),
                    v.error.as_deref().unwrap_or("failed")
                )
                .unwrap(),
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| variant | accuracy | m-logloss |\n|---|---|---|\n");
        for v in &self.variants {
            match (&v.accuracy, &v.log_loss) {
                (Some(acc), Some(ll)) => writeln!(
                    out,
                    "| {} | {:.4}±{:.4} | {:.4}±{:.4} |",
                    v.variant.label(),
                    acc.mean,
                    acc.std,
                    ll.mean,
                    ll.std
                )
                .unwrap(),
                _ => writeln!(
                    out,
                    "| {} | — | — |",
                    v.variant.label()
                )
                .unwrap(),
            }
        }
        out
    }
}

fn variant_features(samples: &[DenoiseSample], variant: DenoiseVariant, goal_override: Option<f64>) -> Vec<f64> {
    let gf = variant.goal_features();
    let width = crate::envs::STATE_DIM + gf;
    let mut out = Vec::with_capacity(samples.len() * width);
    for s in samples {
        out.extend_from_slice(&s.state);
        for i in 0..gf {
            out.push(goal_override.unwrap_or(s.goal[i]));
        }
    }
    out
}

/// Trains the three input variants on an identical split under an
/// identical budget, evaluating against the observed labels. Accuracy is
/// the deployment metric: the goal-conditioned variants predict with
/// every goal component set to 1 — a value that marks a clean sample.
/// The multiclass log-loss is the model-fit diagnostic, evaluated on the
/// test rows with their recorded goals. Seeds vary the boosting
/// subsample; a variant that fails to train is reported with its error
/// and the table keeps the gap.
pub fn run_denoise_comparison(
    samples: &[DenoiseSample],
    budget: &GbtConfig,
    seeds: &[u64],
    train_fraction: f64,
) -> Result<DenoiseComparison, EvalError> {
    if samples.len() < 10 {
        return Err(EvalError::Empty("denoise comparison needs at least 10 samples".into()));
    }
    if seeds.is_empty() {
        return Err(EvalError::Empty("seed list".into()));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(EvalError::Config("train fraction must lie in (0, 1)".into()));
    }
    let n_train = ((samples.len() as f64) * train_fraction).round() as usize;
    let (train, test) = samples.split_at(n_train);

    let n_classes = samples
        .iter()
        .map(|s| s.label.max(s.clean_label))
        .max()
        .unwrap() as usize;
    let train_labels: Vec<usize> = train.iter().map(|s| (s.label - 1) as usize).collect();
    let test_labels: Vec<usize> = test.iter().map(|s| (s.label - 1) as usize).collect();

    let mut variants = Vec::with_capacity(3);
    for variant in DenoiseVariant::ALL {
        let width = crate::envs::STATE_DIM + variant.goal_features();
        let train_feats = variant_features(train, variant, None);
        // Deployment conditioning: every goal dimension at 1.
        let deploy_feats = variant_features(test, variant, Some(1.0));
        // Recorded test rows for the fit diagnostic.
        let recorded_feats = variant_features(test, variant, None);

        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut error = None;
        for &seed in seeds {
            match gbt::fit(&train_feats, width, &train_labels, n_classes, budget, seed) {
                Ok(model) => {
                    let acc = model.accuracy(&deploy_feats, &test_labels);
                    let ll = model.log_loss(&recorded_feats, &test_labels);
                    per_seed.push((acc, ll));
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let (accuracy, log_loss) = if error.is_none() {
            let accs: Vec<f64> = per_seed.iter().map(|(a, _)| *a).collect();
            let lls: Vec<f64> = per_seed.iter().map(|(_, l)| *l).collect();
            (Some(stat(&accs)), Some(stat(&lls)))
        } else {
            (None, None)
        };
        variants.push(DenoiseVariantResult {
            variant,
            accuracy,
            log_loss,
            per_seed,
            error,
        });
    }

    Ok(DenoiseComparison {
        n_train,
        n_test: test.len(),
        seeds: seeds.to_vec(),
        budget: budget.clone(),
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_pcg::Pcg64Mcg;

    fn case(truth: u32, flags: &[bool]) -> EvalCase {
        EvalCase {
            history: vec![],
            timestep: 1,
            goal: GoalVector(vec![0.0; flags.len()]),
            truth,
            flags: flags.to_vec(),
        }
    }

    #[test]
    fn rank_items_sorts_descending() {
        assert_eq!(rank_items(&[0.1, 0.7, 0.2]), vec![2, 3, 1]);
    }

    #[test]
    fn uniform_probs_break_ties_by_id() {
        let n = 6;
        assert_eq!(
            rank_items(&vec![1.0 / n as f64; n]),
            (1..=n as u32).collect::<Vec<_>>()
        );
    }

    #[test]
    fn top_one_is_argmax() {
        let mut rng = Pcg64Mcg::seed_from_u64(1);
        for _ in 0..50 {
            let probs: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let argmax = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .unwrap()
                .0 as u32
                + 1;
            assert_eq!(rank_items(&probs)[0], argmax);
        }
    }

    #[test]
    fn hr_hit_and_miss() {
        let cases = vec![case(3, &[true])];
        // Truth at rank 1.
        let rankings = vec![vec![3, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11]];
        assert_eq!(hr_at_k(&cases, &rankings, 10, 0), Some(1.0));
        // Truth at rank 11.
        let rankings = vec![vec![1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 3]];
        assert_eq!(hr_at_k(&cases, &rankings, 10, 0), Some(0.0));
    }

    #[test]
    fn absent_objective_is_none_not_zero() {
        let cases = vec![case(1, &[false, true])];
        let rankings = vec![vec![1, 2]];
        assert_eq!(hr_at_k(&cases, &rankings, 1, 0), None);
        assert_eq!(hr_at_k(&cases, &rankings, 1, 1), Some(1.0));
    }

    #[test]
    fn random_rankings_hit_ten_percent() {
        let n_items = 100u32;
        let k = 10;
        let n_cases = 100_000;
        let mut rng = Pcg64Mcg::seed_from_u64(2);
        let mut items: Vec<u32> = (1..=n_items).collect();
        let cases: Vec<EvalCase> = (0..n_cases)
            .map(|_| case(rng.random_range(1..=n_items), &[true]))
            .collect();
        let rankings: Vec<Vec<u32>> = (0..n_cases)
            .map(|_| {
                items.shuffle(&mut rng);
                items.clone()
            })
            .collect();
        let hr = hr_at_k(&cases, &rankings, k, 0).unwrap();
        assert!((hr - 0.10).abs() < 0.01, "hr {hr}");
    }

    #[test]
    fn ndcg_formula_values() {
        let cases = vec![case(5, &[true])];
        let rankings = vec![vec![5, 1, 2, 3, 4]];
        assert!((ndcg_at_k(&cases, &rankings, 5, 0).unwrap() - 1.0).abs() < 1e-12);
        let rankings = vec![vec![1, 2, 5, 3, 4]];
        let expected = 1.0 / 4.0f64.log2();
        assert!((ndcg_at_k(&cases, &rankings, 5, 0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5).abs() < 1e-12);
    }

    /// Brute-force per-case metric computation, kept deliberately
    /// independent of the library path.
    fn brute_force(cases: &[EvalCase], rankings: &[Vec<u32>], k: usize, obj: usize) -> Option<(f64, f64)> {
        let mut hits = 0.0;
        let mut dcg = 0.0;
        let mut n = 0.0;
        for (c, ranking) in cases.iter().zip(rankings) {
            if !c.flags[obj] {
                continue;
            }
            n += 1.0;
            let mut rank = 0usize;
            for (pos, &item) in ranking.iter().enumerate() {
                if item == c.truth {
                    rank = pos + 1;
                    break;
                }
            }
            if rank >= 1 && rank <= k {
                hits += 1.0;
                dcg += 1.0 / ((rank + 1) as f64).log2();
            }
        }
        if n == 0.0 {
            None
        } else {
            Some((hits / n, dcg / n))
        }
    }

    #[test]
    fn metrics_match_brute_force_and_monotonicity() {
        let mut rng = Pcg64Mcg::seed_from_u64(3);
        let n_items = 12u32;
        let mut items: Vec<u32> = (1..=n_items).collect();
        let cases: Vec<EvalCase> = (0..100)
            .map(|_| {
                case(
                    rng.random_range(1..=n_items),
                    &[rng.random_range(0..2) == 0, rng.random_range(0..2) == 0],
                )
            })
            .collect();
        let rankings: Vec<Vec<u32>> = (0..100)
            .map(|_| {
                items.shuffle(&mut rng);
                items.clone()
            })
            .collect();
        for obj in 0..2 {
            let mut prev_hr = 0.0;
            let mut prev_ndcg = 0.0;
            for k in 1..=n_items as usize {
                let hr = hr_at_k(&cases, &rankings, k, obj);
                let ndcg = ndcg_at_k(&cases, &rankings, k, obj);
                match brute_force(&cases, &rankings, k, obj) {
                    None => {
                        assert!(hr.is_none() && ndcg.is_none());
                    }
                    Some((bf_hr, bf_ndcg)) => {
                        assert!((hr.unwrap() - bf_hr).abs() < 1e-12);
                        assert!((ndcg.unwrap() - bf_ndcg).abs() < 1e-12);
                        // NDCG discounts each hit, so it never exceeds HR;
                        // both are non-decreasing in k.
                        assert!(ndcg.unwrap() <= hr.unwrap() + 1e-12);
                        assert!(hr.unwrap() + 1e-12 >= prev_hr);
                        assert!(ndcg.unwrap() + 1e-12 >= prev_ndcg);
                        prev_hr = hr.unwrap();
                        prev_ndcg = ndcg.unwrap();
                    }
                }
            }
        }
    }

    fn sample_report() -> MetricsReport {
        let mk = |vals: &[(usize, f64, f64)]| -> BTreeMap<usize, MetricStat> {
            vals.iter()
                .map(|&(k, mean, std)| (k, MetricStat { mean, std, n_seeds: 2 }))
                .collect()
        };
        MetricsReport {
            ks: vec![5, 10],
            n_seeds: 2,
            objectives: vec![
                ObjectiveMetrics {
                    objective: 0,
                    n_cases: 40,
                    hr: mk(&[(5, 0.5, 0.01), (10, 0.625, 0.02)]),
                    ndcg: mk(&[(5, 0.375, 0.01), (10, 0.4375, 0.0)]),
                },
                ObjectiveMetrics {
                    objective: 1,
                    n_cases: 10,
                    hr: mk(&[(5, 0.25, 0.05), (10, 0.3, 0.01)]),
                    ndcg: mk(&[(5, 0.125, 0.0), (10, 0.2, 0.02)]),
                },
            ],
        }
    }

    #[test]
    fn report_json_round_trip() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        emit_report(&report, &path, ReportFormat::Json).unwrap();
        let loaded: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn report_csv_has_one_row_per_cell() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        emit_report(&report, &path, ReportFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        // header + 2 objectives x 2 metrics x 2 ks
        assert_eq!(rows.len(), 1 + 2 * 2 * 2);
        assert!(rows[1].starts_with("0,hr,5,"));
    }

    #[test]
    fn report_markdown_carries_mean_pm_std() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.md");
        emit_report(&report, &path, ReportFormat::Markdown).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("HR@5"));
        assert!(text.contains("0.5000±0.0100"));
        assert!(text.contains("0.1250±0.0000"));
    }

    #[test]
    fn aggregate_computes_mean_and_std() {
        let mk_run = |hr5: f64| SingleEval {
            ks: vec![5],
            reward_dim: 1,
            hr: vec![[(5, hr5)].into_iter().collect()],
            ndcg: vec![[(5, hr5 / 2.0)].into_iter().collect()],
            n_cases: vec![10],
        };
        let report = MetricsReport::aggregate(&[mk_run(0.4), mk_run(0.6)]).unwrap();
        let s = &report.objectives[0].hr[&5];
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.std - (0.02f64).sqrt()).abs() < 1e-12);
        assert_eq!(s.n_seeds, 2);
    }

    #[test]
    fn denoise_comparison_runs_and_reports_all_variants() {
        let samples = crate::envs::generate_denoise_dataset(2000, 3);
        let budget = GbtConfig {
            n_rounds: 3,
            max_depth: 3,
            subsample: 0.5,
            ..GbtConfig::default()
        };
        let table = run_denoise_comparison(&samples, &budget, &[0, 1], 0.8).unwrap();
        assert_eq!(table.variants.len(), 3);
        assert_eq!(table.n_train, 1600);
        assert_eq!(table.n_test, 400);
        for v in &table.variants {
            assert!(v.error.is_none());
            assert_eq!(v.per_seed.len(), 2);
            let acc = v.accuracy.as_ref().unwrap();
            assert!(acc.mean >= 0.0 && acc.mean <= 1.0);
        }
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("multi-goal"));
        assert!(table.to_markdown().contains("m-logloss"));
    }
}
