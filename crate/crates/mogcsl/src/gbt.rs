//! Multiclass gradient-boosted decision trees.
//!
//! Histogram-based boosting with a softmax objective: each round fits one
//! regression tree per class on the gradient/hessian of the multiclass
//! cross-entropy, with quantile-binned features, L2-regularized leaf
//! weights, and per-round row subsampling. Deterministic given the seed.
//!
//! This backs the denoising comparison, which needs one deterministic
//! multiclass classifier trained under an identical budget across input
//! variants.

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("config error: {0}")]
    Config(String),
    #[error("empty training set")]
    Empty,
    #[error("feature matrix size {found} is not rows x n_features = {expected}")]
    BadShape { expected: usize, found: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: usize, n_classes: usize },
}

/// Training budget, fixed across comparison variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Quantile bins per feature (≤ 256).
    pub n_bins: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
    /// Fraction of rows drawn (without replacement) per round.
    pub subsample: f64,
    /// Fraction of features each tree may split on.
    pub colsample: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_rounds: 30,
            max_depth: 4,
            learning_rate: 0.3,
            n_bins: 64,
            lambda: 1.0,
            min_child_weight: 1.0,
            subsample: 0.85,
            colsample: 1.0,
        }
    }
}

impl GbtConfig {
    fn validate(&self) -> Result<(), GbtError> {
        if self.n_rounds == 0 || self.max_depth == 0 {
            return Err(GbtError::Config("rounds and depth must be positive".into()));
        }
        if !(2..=256).contains(&self.n_bins) {
            return Err(GbtError::Config("n_bins must be in [2, 256]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GbtError::Config("learning rate must be positive".into()));
        }
        if !(0.0 < self.subsample && self.subsample <= 1.0) {
            return Err(GbtError::Config("subsample must be in (0, 1]".into()));
        }
        if !(0.0 < self.colsample && self.colsample <= 1.0) {
            return Err(GbtError::Config("colsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Split {
        feature: u32,
        /// Go left if the binned feature value is ≤ this bin.
        bin: u8,
        left: u32,
        right: u32,
    },
    Leaf { weight: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_binned(&self, row: &[u8]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                } => {
                    idx = if row[*feature as usize] <= *bin {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// A trained multiclass booster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub config: GbtConfig,
    /// Per-feature ascending cut points; value ≤ edge\[i\] falls in bin i.
    bin_edges: Vec<Vec<f64>>,
    /// `trees[round][class]`.
    trees: Vec<Vec<Tree>>,
}

struct Histogram {
    /// (grad, hess) per (feature, bin).
    grad: Vec<f64>,
    hess: Vec<f64>,
    n_bins: usize,
}

impl Histogram {
    fn new(n_features: usize, n_bins: usize) -> Self {
        Histogram {
            grad: vec![0.0; n_features * n_bins],
            hess: vec![0.0; n_features * n_bins],
            n_bins,
        }
    }

    fn fill(
        &mut self,
        binned: &[u8],
        n_features: usize,
        rows: &[u32],
        features_used: &[u32],
        grad_of: &dyn Fn(u32) -> (f64, f64),
    ) {
        for &r in rows {
            let (g, h) = grad_of(r);
            let row = &binned[r as usize * n_features..(r as usize + 1) * n_features];
            for &f in features_used {
                let slot = f as usize * self.n_bins + row[f as usize] as usize;
                self.grad[slot] += g;
                self.hess[slot] += h;
            }
        }
    }

    /// `self = parent - other` (the sibling histogram).
    fn subtract_from(&mut self, parent: &Histogram, other: &Histogram) {
        for (s, (p, o)) in self
            .grad
            .iter_mut()
            .zip(parent.grad.iter().zip(&other.grad))
        {
            *s = p - o;
        }
        for (s, (p, o)) in self
            .hess
            .iter_mut()
            .zip(parent.hess.iter().zip(&other.hess))
        {
            *s = p - o;
        }
    }
}

/// Fits a booster on a flat row-major feature matrix.
pub fn fit(
    features: &[f64],
    n_features: usize,
    labels: &[usize],
    n_classes: usize,
    config: &GbtConfig,
    seed: u64,
) -> Result<GbtModel, GbtError> {
    config.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(GbtError::Empty);
    }
    if features.len() != n * n_features {
        return Err(GbtError::BadShape {
            expected: n * n_features,
            found: features.len(),
        });
    }
    for &l in labels {
        if l >= n_classes {
            return Err(GbtError::BadLabel {
                label: l,
                n_classes,
            });
        }
    }

    let bin_edges = quantile_edges(features, n, n_features, config.n_bins);
    let binned = bin_rows(features, n, n_features, &bin_edges);

    let mut raw = vec![0.0f64; n * n_classes];
    let mut probs = vec![0.0f64; n * n_classes];
    let mut trees: Vec<Vec<Tree>> = Vec::with_capacity(config.n_rounds);
    let mut rng = Pcg64Mcg::seed_from_u64(seed);

    for _round in 0..config.n_rounds {
        softmax_rows(&raw, &mut probs, n, n_classes);

        // One row subsample per round, shared by all class trees.
        let rows: Vec<u32> = if config.subsample < 1.0 {
            let target = ((n as f64) * config.subsample).round().max(1.0) as usize;
            let mut idx: Vec<u32> = (0..n as u32).collect();
            let (chosen, _) = idx.partial_shuffle(&mut rng, target);
            let mut take = chosen.to_vec();
            take.sort_unstable();
            take
        } else {
            (0..n as u32).collect()
        };

        let n_cols = ((n_features as f64) * config.colsample).ceil().max(1.0) as usize;
        let mut round_trees = Vec::with_capacity(n_classes);
        for class in 0..n_classes {
            let grad_of = |row: u32| -> (f64, f64) {
                let r = row as usize;
                let p = probs[r * n_classes + class];
                let y = if labels[r] == class { 1.0 } else { 0.0 };
                (p - y, (2.0 * p * (1.0 - p)).max(1e-16))
            };
            let features_used: Vec<u32> = if n_cols < n_features {
                let mut idx: Vec<u32> = (0..n_features as u32).collect();
                let (chosen, _) = idx.partial_shuffle(&mut rng, n_cols);
                let mut take = chosen.to_vec();
                take.sort_unstable();
                take
            } else {
                (0..n_features as u32).collect()
            };
            let tree = build_tree(&binned, n_features, &rows, &features_used, &grad_of, config);
            round_trees.push(tree);
        }

        // Update raw scores on every row.
        for (r, row) in binned.chunks(n_features).enumerate() {
            for (class, tree) in round_trees.iter().enumerate() {
                raw[r * n_classes + class] += tree.predict_binned(row);
            }
        }
        trees.push(round_trees);
    }

    Ok(GbtModel {
        n_classes,
        n_features,
        config: config.clone(),
        bin_edges,
        trees,
    })
}

fn quantile_edges(features: &[f64], n: usize, n_features: usize, n_bins: usize) -> Vec<Vec<f64>> {
    let mut edges = Vec::with_capacity(n_features);
    let mut column = vec![0.0f64; n];
    for f in 0..n_features {
        for r in 0..n {
            column[r] = features[r * n_features + f];
        }
        column.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut cuts = Vec::with_capacity(n_bins - 1);
        for b in 1..n_bins {
            let pos = b * n / n_bins;
            let cut = column[pos.min(n - 1)];
            if cuts.last().is_none_or(|&last| cut > last) {
                cuts.push(cut);
            }
        }
        edges.push(cuts);
    }
    edges
}

fn bin_value(edges: &[f64], v: f64) -> u8 {
    // First bin whose upper edge is >= v; ties go left.
    let mut lo = 0usize;
    let mut hi = edges.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        if v <= edges[mid] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo as u8
}

fn bin_rows(features: &[f64], n: usize, n_features: usize, edges: &[Vec<f64>]) -> Vec<u8> {
    let mut out = vec![0u8; n * n_features];
    for r in 0..n {
        for f in 0..n_features {
            out[r * n_features + f] = bin_value(&edges[f], features[r * n_features + f]);
        }
    }
    out
}

fn softmax_rows(raw: &[f64], probs: &mut [f64], n: usize, k: usize) {
    for r in 0..n {
        let row = &raw[r * k..(r + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (p, &x) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
            *p = (x - max).exp();
            sum += *p;
        }
        for p in &mut probs[r * k..(r + 1) * k] {
            *p /= sum;
        }
    }
}

fn build_tree(
    binned: &[u8],
    n_features: usize,
    rows: &[u32],
    features_used: &[u32],
    grad_of: &dyn Fn(u32) -> (f64, f64),
    config: &GbtConfig,
) -> Tree {
    struct Pending {
        node: usize,
        rows: Vec<u32>,
        grad: f64,
        hess: f64,
        depth: usize,
        hist: Histogram,
    }

    let mut nodes: Vec<Node> = vec![Node::Leaf { weight: 0.0 }];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &r in rows {
        let (g, h) = grad_of(r);
        g0 += g;
        h0 += h;
    }
    let mut root_hist = Histogram::new(n_features, config.n_bins);
    root_hist.fill(binned, n_features, rows, features_used, grad_of);
    let mut stack = vec![Pending {
        node: 0,
        rows: rows.to_vec(),
        grad: g0,
        hess: h0,
        depth: 0,
        hist: root_hist,
    }];

    while let Some(p) = stack.pop() {
        let leaf_weight = -config.learning_rate * p.grad / (p.hess + config.lambda);
        if p.depth >= config.max_depth || p.rows.len() < 2 {
            nodes[p.node] = Node::Leaf { weight: leaf_weight };
            continue;
        }

        let hist = &p.hist;
        let parent_score = p.grad * p.grad / (p.hess + config.lambda);
        let mut best_gain = 1e-12;
        let mut best: Option<(usize, u8, f64, f64)> = None;
        for &fu in features_used {
            let f = fu as usize;
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..hist.n_bins - 1 {
                let slot = f * hist.n_bins + b;
                gl += hist.grad[slot];
                hl += hist.hess[slot];
                let gr = p.grad - gl;
                let hr = p.hess - hl;
                if hl < config.min_child_weight || hr < config.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + config.lambda) + gr * gr / (hr + config.lambda)
                    - parent_score;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((f, b as u8, gl, hl));
                }
            }
        }

        match best {
            None => nodes[p.node] = Node::Leaf { weight: leaf_weight },
            Some((feature, bin, gl, hl)) => {
                let mut left_rows = Vec::new();
                let mut right_rows = Vec::new();
                for &r in &p.rows {
                    if binned[r as usize * n_features + feature] <= bin {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let left = nodes.len();
                nodes.push(Node::Leaf { weight: 0.0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { weight: 0.0 });
                nodes[p.node] = Node::Split {
                    feature: feature as u32,
                    bin,
                    left: left as u32,
                    right: right as u32,
                };
                // Build the smaller child's histogram by scanning its
                // rows; recover the sibling's by subtraction.
                let left_smaller = left_rows.len() <= right_rows.len();
                let mut small = Histogram::new(n_features, config.n_bins);
                small.fill(
                    binned,
                    n_features,
                    if left_smaller { &left_rows } else { &right_rows },
                    features_used,
                    grad_of,
                );
                let mut large = Histogram::new(n_features, config.n_bins);
                large.subtract_from(&p.hist, &small);
                let (left_hist, right_hist) = if left_smaller {
                    (small, large)
                } else {
                    (large, small)
                };
                stack.push(Pending {
                    node: left,
                    rows: left_rows,
                    grad: gl,
                    hess: hl,
                    depth: p.depth + 1,
                    hist: left_hist,
                });
                stack.push(Pending {
                    node: right,
                    rows: right_rows,
                    grad: p.grad - gl,
                    hess: p.hess - hl,
                    depth: p.depth + 1,
                    hist: right_hist,
                });
            }
        }
    }
    Tree { nodes }
}

impl GbtModel {
    /// Class probabilities for one feature row.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.n_features);
        let binned: Vec<u8> = row
            .iter()
            .enumerate()
            .map(|(f, &v)| bin_value(&self.bin_edges[f], v))
            .collect();
        let mut raw = vec![0.0f64; self.n_classes];
        for round in &self.trees {
            for (class, tree) in round.iter().enumerate() {
                raw[class] += tree.predict_binned(&binned);
            }
        }
        let mut probs = vec![0.0f64; self.n_classes];
        softmax_rows(&raw, &mut probs, 1, self.n_classes);
        probs
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let probs = self.predict_proba(row);
        probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }

    /// How many split nodes test each feature, across all trees.
    pub fn feature_split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_features];
        for round in &self.trees {
            for tree in round {
                for node in &tree.nodes {
                    if let Node::Split { feature, .. } = node {
                        counts[*feature as usize] += 1;
                    }
                }
            }
        }
        counts
    }

    /// Fraction of rows whose argmax prediction matches the label.
    pub fn accuracy(&self, features: &[f64], labels: &[usize]) -> f64 {
        let n = labels.len();
        let hits = features
            .chunks(self.n_features)
            .zip(labels)
            .filter(|(row, label)| self.predict(row) == **label)
            .count();
        hits as f64 / n as f64
    }

    /// Mean multiclass negative log-likelihood.
    pub fn log_loss(&self, features: &[f64], labels: &[usize]) -> f64 {
        let n = labels.len();
        let mut total = 0.0;
        for (row, &label) in features.chunks(self.n_features).zip(labels) {
            let p = self.predict_proba(row)[label].max(1e-15);
            total -= p.ln();
        }
        total / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
        use rand_distr::StandardNormal;
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..n_per {
                let e0: f64 = rng.sample(StandardNormal);
                let e1: f64 = rng.sample(StandardNormal);
                features.push(c[0] + 0.5 * e0);
                features.push(c[1] + 0.5 * e1);
                labels.push(k);
            }
        }
        (features, labels)
    }

    #[test]
    fn separable_threshold_is_learned() {
        // One feature, binary: label = 1 iff x > 0.
        let n = 400;
        let mut rng = Pcg64Mcg::seed_from_u64(1);
        let features: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = features.iter().map(|&x| usize::from(x > 0.0)).collect();
        let config = GbtConfig {
            n_rounds: 8,
            max_depth: 2,
            subsample: 1.0,
            ..GbtConfig::default()
        };
        let model = fit(&features, 1, &labels, 2, &config, 0).unwrap();
        assert!(model.accuracy(&features, &labels) > 0.98);
    }

    #[test]
    fn gaussian_blobs_three_classes() {
        let (features, labels) = blobs(300, 2);
        let config = GbtConfig {
            n_rounds: 15,
            max_depth: 3,
            subsample: 0.8,
            ..GbtConfig::default()
        };
        let model = fit(&features, 2, &labels, 3, &config, 3).unwrap();
        let acc = model.accuracy(&features, &labels);
        assert!(acc > 0.95, "accuracy {acc}");
        let ll = model.log_loss(&features, &labels);
        assert!(ll < 0.3, "log loss {ll}");
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (features, labels) = blobs(100, 4);
        let model = fit(&features, 2, &labels, 3, &GbtConfig::default(), 5).unwrap();
        for row in features.chunks(2).take(20) {
            let p = model.predict_proba(row);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn more_rounds_reduce_log_loss() {
        let (features, labels) = blobs(200, 6);
        let short = fit(
            &features,
            2,
            &labels,
            3,
            &GbtConfig {
                n_rounds: 2,
                ..GbtConfig::default()
            },
            7,
        )
        .unwrap();
        let long = fit(
            &features,
            2,
            &labels,
            3,
            &GbtConfig {
                n_rounds: 20,
                ..GbtConfig::default()
            },
            7,
        )
        .unwrap();
        assert!(long.log_loss(&features, &labels) < short.log_loss(&features, &labels));
    }

    #[test]
    fn training_is_deterministic() {
        let (features, labels) = blobs(100, 8);
        let a = fit(&features, 2, &labels, 3, &GbtConfig::default(), 9).unwrap();
        let b = fit(&features, 2, &labels, 3, &GbtConfig::default(), 9).unwrap();
        for row in features.chunks(2).take(10) {
            assert_eq!(a.predict_proba(row), b.predict_proba(row));
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let err = fit(&[0.0, 1.0], 1, &[0, 5], 3, &GbtConfig::default(), 0).unwrap_err();
        assert!(matches!(err, GbtError::BadLabel { label: 5, .. }));
    }
}
