//! Benchmarks for the hot paths: relabeling, Pareto selection, ranking
//! metrics, policy forward passes, and a boosting round.

use criterion::{Criterion, criterion_group, criterion_main};
use rand::prelude::*;
use rand_pcg::Pcg64Mcg;
use std::hint::black_box;

use mogcsl::data::{self, GoalVector};
use mogcsl::envs::generate_denoise_dataset;
use mogcsl::eval::{self, EvalCase};
use mogcsl::gbt::{self, GbtConfig};
use mogcsl::goalsel;
use mogcsl::policy::{EncoderKind, PolicyConfig, PolicyModel};
use mogcsl_bench::sample_trajectories;

fn bench_relabel(c: &mut Criterion) {
    let trajs = sample_trajectories(1000, 1);
    c.bench_function("relabel_1000_sessions", |b| {
        b.iter(|| black_box(data::relabel_all(black_box(&trajs))))
    });
}

fn bench_pareto(c: &mut Criterion) {
    let mut rng = Pcg64Mcg::seed_from_u64(2);
    let candidates: Vec<GoalVector> = (0..1000)
        .map(|_| GoalVector(vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]))
        .collect();
    c.bench_function("pareto_front_1000", |b| {
        b.iter(|| black_box(goalsel::pareto_non_dominated(black_box(&candidates))))
    });
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = Pcg64Mcg::seed_from_u64(3);
    let n_items = 100u32;
    let mut items: Vec<u32> = (1..=n_items).collect();
    let cases: Vec<EvalCase> = (0..10_000)
        .map(|_| EvalCase {
            history: vec![],
            timestep: 1,
            goal: GoalVector(vec![0.0, 0.0]),
            truth: rng.random_range(1..=n_items),
            flags: vec![true, true],
        })
        .collect();
    let rankings: Vec<Vec<u32>> = (0..10_000)
        .map(|_| {
            items.shuffle(&mut rng);
            items.clone()
        })
        .collect();
    c.bench_function("hr_ndcg_10k_cases", |b| {
        b.iter(|| {
            black_box(eval::hr_at_k(&cases, &rankings, 10, 0));
            black_box(eval::ndcg_at_k(&cases, &rankings, 10, 0));
        })
    });
}

fn bench_policy_forward(c: &mut Criterion) {
    let model = PolicyModel::new(PolicyConfig {
        n_items: 50,
        reward_dim: 2,
        window: 10,
        item_embed_dim: 32,
        goal_embed_dim: 32,
        timestep_embed_dim: 32,
        encoder: EncoderKind::Transformer {
            depth: 1,
            heads: 1,
            ffn_hidden: 64,
        },
        attention_block: true,
        mlp_hidden_sizes: vec![64],
        max_timestep: 32,
        ..PolicyConfig::default()
    })
    .unwrap();
    let mut rng = Pcg64Mcg::seed_from_u64(4);
    let histories: Vec<Vec<u32>> = (0..256)
        .map(|_| (0..8).map(|_| rng.random_range(1..=50)).collect())
        .collect();
    let goal = [3.0, 1.0];
    let inputs: Vec<(&[u32], usize, &[f64])> = histories
        .iter()
        .map(|h| (h.as_slice(), 5usize, goal.as_slice()))
        .collect();
    c.bench_function("policy_forward_batch_256", |b| {
        b.iter(|| black_box(model.predict_batch(black_box(&inputs)).unwrap()))
    });
}

fn bench_gbt_round(c: &mut Criterion) {
    let samples = generate_denoise_dataset(5000, 5);
    let mut features = Vec::new();
    for s in &samples {
        features.extend_from_slice(&s.state);
        features.extend_from_slice(&s.goal);
    }
    let labels: Vec<usize> = samples.iter().map(|s| (s.label - 1) as usize).collect();
    let budget = GbtConfig {
        n_rounds: 1,
        max_depth: 4,
        subsample: 0.5,
        ..GbtConfig::default()
    };
    c.bench_function("gbt_one_round_5k_rows_51_classes", |b| {
        b.iter(|| black_box(gbt::fit(&features, 55, &labels, 51, &budget, 0).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_relabel,
    bench_pareto,
    bench_metrics,
    bench_policy_forward,
    bench_gbt_round
);
criterion_main!(benches);
