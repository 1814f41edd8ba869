//! Inference-time goal selection.
//!
//! Two strategies are provided. The *statistical* strategy scales a mean
//! training goal by a factor λ. The *generative* strategy models goals
//! with two conditional VAEs — one for the distribution of goals the
//! trained policy can actually achieve from a state given an input goal,
//! one as a state-conditioned prior over input goals — then samples K
//! candidate input goals, estimates each one's expected achieved goal by
//! decoder sampling, and picks a Pareto-non-dominated candidate.
//!
//! States are represented by the frozen goal-free embedding of the
//! trained policy, so the CVAEs inherit the policy's view of the session
//! without re-learning sequence structure.

use std::path::Path;

use rand::prelude::*;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetStats, GoalVector, RelabeledStep};
use crate::nn::{Adam, Graph, Mat, NodeId, init_uniform};
use crate::policy::{PolicyError, PolicyModel};

#[derive(Debug, Error)]
pub enum GoalSelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("model format version {found}, this build reads {expected}")]
    Version { expected: u32, found: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Which dataset statistic the statistical strategy scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    /// λ × mean goal at the same timestep (clamped to the observed
    /// range).
    PerTimestepMean,
    /// λ × mean initial goal.
    GlobalMean,
    /// λ × componentwise maximum initial goal.
    Max,
}

/// The statistical goal strategy: a positive factor λ applied to a mean
/// (or max) goal from the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatStrategyConfig {
    pub factor: f64,
    pub mode: StatMode,
}

impl StatStrategyConfig {
    pub fn per_timestep(factor: f64) -> Self {
        StatStrategyConfig {
            factor,
            mode: StatMode::PerTimestepMean,
        }
    }
}

/// The inference goal for a given timestep under the statistical
/// strategy.
pub fn statistical_goal(
    stats: &DatasetStats,
    timestep: usize,
    cfg: &StatStrategyConfig,
) -> Result<GoalVector, GoalSelError> {
    if !(cfg.factor.is_finite() && cfg.factor > 0.0) {
        return Err(GoalSelError::Config(format!(
            "factor must be positive, got {}",
            cfg.factor
        )));
    }
    if timestep == 0 {
        return Err(GoalSelError::Config("timestep must be >= 1".into()));
    }
    if stats.per_timestep_mean_goal.is_empty() {
        return Err(GoalSelError::Empty("dataset statistics".into()));
    }
    let base = match cfg.mode {
        StatMode::PerTimestepMean => stats.mean_goal_at(timestep),
        StatMode::GlobalMean => &stats.global_mean_goal,
        StatMode::Max => &stats.max_initial_goal,
    };
    Ok(base.scale(cfg.factor))
}

/// Hyperparameters shared by both conditional VAEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Decoder observation variance σ².
    pub decoder_variance: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        CvaeConfig {
            latent_dim: 8,
            hidden_dim: 64,
            decoder_variance: 1.0,
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 40,
            seed: 0,
        }
    }
}

const LOGVAR_CLAMP: f64 = 8.0;

/// One conditional VAE: encoder q(z | target, cond) with Gaussian
/// posterior, decoder N(f(z, cond), σ²I).
#[derive(Debug, Clone)]
pub struct Cvae {
    pub target_dim: usize,
    pub cond_dim: usize,
    pub config: CvaeConfig,
    params: Vec<(String, Mat)>,
}

impl Cvae {
    pub fn new(target_dim: usize, cond_dim: usize, config: CvaeConfig, seed: u64) -> Self {
        let mut rng = Pcg64Mcg::seed_from_u64(seed);
        let h = config.hidden_dim;
        let lat = config.latent_dim;
        let enc_in = target_dim + cond_dim;
        let dec_in = lat + cond_dim;
        let params = vec![
            ("enc.w1".into(), init_uniform(&mut rng, enc_in, h)),
            ("enc.b1".into(), Mat::zeros(1, h)),
            ("enc.mu_w".into(), init_uniform(&mut rng, h, lat)),
            ("enc.mu_b".into(), Mat::zeros(1, lat)),
            ("enc.lv_w".into(), init_uniform(&mut rng, h, lat)),
            ("enc.lv_b".into(), Mat::zeros(1, lat)),
            ("dec.w1".into(), init_uniform(&mut rng, dec_in, h)),
            ("dec.b1".into(), Mat::zeros(1, h)),
            ("dec.w2".into(), init_uniform(&mut rng, h, target_dim)),
            ("dec.b2".into(), Mat::zeros(1, target_dim)),
        ];
        Cvae {
            target_dim,
            cond_dim,
            config,
            params,
        }
    }

    fn leaf_all(&self, g: &mut Graph) -> Vec<NodeId> {
        self.params.iter().map(|(_, m)| g.leaf(m.clone())).collect()
    }

    /// Negative ELBO: 1/(2σ²)·‖target − f(z, c)‖² + KL(q ‖ N(0, I)),
    /// averaged over the batch, with z = μ + exp(½ logvar) ⊙ ε.
    fn loss_graph(
        &self,
        g: &mut Graph,
        leaves: &[NodeId],
        targets: &Mat,
        conds: &Mat,
        eps: &Mat,
    ) -> NodeId {
        let t = g.leaf(targets.clone());
        let c = g.leaf(conds.clone());
        let e = g.leaf(eps.clone());

        let enc_in = g.concat_cols(vec![t, c]);
        let h = g.matmul(enc_in, leaves[0]);
        let h = g.add_row(h, leaves[1]);
        let h = g.relu(h);
        let mu = g.matmul(h, leaves[2]);
        let mu = g.add_row(mu, leaves[3]);
        let lv = g.matmul(h, leaves[4]);
        let lv = g.add_row(lv, leaves[5]);
        let lv = g.clamp(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP);

        // z = mu + exp(lv/2) ⊙ eps
        let half_lv = g.scale(lv, 0.5);
        let std = g.exp(half_lv);
        let noise = g.mul(std, e);
        let z = g.add(mu, noise);

        let dec_in = g.concat_cols(vec![z, c]);
        let dh = g.matmul(dec_in, leaves[6]);
        let dh = g.add_row(dh, leaves[7]);
        let dh = g.relu(dh);
        let mean = g.matmul(dh, leaves[8]);
        let mean = g.add_row(mean, leaves[9]);

        let diff = g.sub(t, mean);
        let sq = g.mul(diff, diff);
        let recon = g.row_sum(sq);
        let recon = g.scale(recon, 0.5 / self.config.decoder_variance);

        // KL per row: ½ Σ (μ² + e^lv − 1 − lv)
        let mu_sq = g.mul(mu, mu);
        let e_lv = g.exp(lv);
        let sum = g.add(mu_sq, e_lv);
        let sum = g.sub(sum, lv);
        let sum = g.add_scalar(sum, -1.0);
        let kl = g.row_sum(sum);
        let kl = g.scale(kl, 0.5);

        let per_row = g.add(recon, kl);
        g.mean_all(per_row)
    }

    /// Decoder mean f(z, cond) (forward only).
    pub fn decode_mean(&self, z: &[f64], cond: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.config.latent_dim);
        assert_eq!(cond.len(), self.cond_dim);
        let mut input = Vec::with_capacity(z.len() + cond.len());
        input.extend_from_slice(z);
        input.extend_from_slice(cond);
        let x = Mat::row_vec(&input);
        let h = x.matmul(&self.params[6].1);
        let mut h = h;
        for (v, b) in h.row_mut(0).iter_mut().zip(self.params[7].1.row(0)) {
            *v = (*v + b).max(0.0);
        }
        let mut out = h.matmul(&self.params[8].1);
        for (v, b) in out.row_mut(0).iter_mut().zip(self.params[9].1.row(0)) {
            *v += b;
        }
        out.data
    }

    /// One generative sample: z ~ N(0, I), then target ~ N(f(z, c), σ²I).
    pub fn sample(&self, cond: &[f64], rng: &mut Pcg64Mcg) -> Vec<f64> {
        let z: Vec<f64> = (0..self.config.latent_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let sigma = self.config.decoder_variance.sqrt();
        self.decode_mean(&z, cond)
            .into_iter()
            .map(|m| {
                let e: f64 = rng.sample(StandardNormal);
                m + sigma * e
            })
            .collect()
    }
}

/// Trains one CVAE on (target, condition) pairs; returns the per-epoch
/// negative-ELBO trace.
pub fn train_cvae(
    cvae: &mut Cvae,
    targets: &[Vec<f64>],
    conds: &[Vec<f64>],
) -> Result<Vec<f64>, GoalSelError> {
    if targets.is_empty() {
        return Err(GoalSelError::Empty("cvae training set".into()));
    }
    if targets.len() != conds.len() {
        return Err(GoalSelError::Config(
            "targets and conditions must align".into(),
        ));
    }
    let cfg = cvae.config.clone();
    let mut rng = Pcg64Mcg::seed_from_u64(cfg.seed.wrapping_add(11));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    let mut trace = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let mut t = Mat::zeros(b, cvae.target_dim);
            let mut c = Mat::zeros(b, cvae.cond_dim);
            for (r, &i) in chunk.iter().enumerate() {
                t.row_mut(r).copy_from_slice(&targets[i]);
                c.row_mut(r).copy_from_slice(&conds[i]);
            }
            let eps = Mat::from_fn(b, cfg.latent_dim, |_, _| rng.sample(StandardNormal));

            let mut g = Graph::new();
            let leaves = cvae.leaf_all(&mut g);
            let loss = cvae.loss_graph(&mut g, &leaves, &t, &c, &eps);
            let value = g.value(loss).data[0];
            if !value.is_finite() {
                return Err(GoalSelError::NanLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += value * b as f64;
            g.backward(loss);
            let grads: Vec<Mat> = leaves.iter().map(|&id| g.grad(id)).collect();
            let mut refs: Vec<&mut Mat> = cvae.params.iter_mut().map(|(_, m)| m).collect();
            adam.step(&mut refs, &grads);
        }
        trace.push(epoch_loss / targets.len() as f64);
    }
    Ok(trace)
}

/// The two trained goal models: the achievable-goal CVAE conditioned on
/// (state, input goal) and the goal prior conditioned on the state
/// alone.
#[derive(Debug, Clone)]
pub struct CvaePair {
    pub achievable: Cvae,
    pub prior: Cvae,
    pub state_dim: usize,
    pub goal_dim: usize,
    /// Per-dimension mean/std of the training goals, for the balanced
    /// utility.
    pub goal_mean: Vec<f64>,
    pub goal_std: Vec<f64>,
}

impl CvaePair {
    /// The balanced Pareto utility standardized by this pair's training
    /// goals.
    pub fn balanced_utility(&self) -> Utility {
        Utility::ParetoBalanced {
            mean: self.goal_mean.clone(),
            std: self.goal_std.clone(),
        }
    }
}

/// Per-epoch negative-ELBO traces from [`train_cvaes`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvaeTrainReport {
    pub achievable_trace: Vec<f64>,
    pub prior_trace: Vec<f64>,
}

/// Trains the achievable-goal model and the goal prior on relabeled
/// training data, conditioning on the frozen state embedding of the
/// already-trained policy. Each training pair (s, g) serves as a sample
/// of the goal achievable from s under input goal g — the policy was
/// trained to imitate exactly those demonstrations.
pub fn train_cvaes(
    steps: &[RelabeledStep],
    policy: &PolicyModel,
    config: CvaeConfig,
) -> Result<(CvaePair, CvaeTrainReport), GoalSelError> {
    if steps.is_empty() {
        return Err(GoalSelError::Empty("cvae training set".into()));
    }
    let goal_dim = steps[0].goal.dim();
    let state_dim = policy.state_embedding_dim();

    let inputs: Vec<(&[u32], usize)> = steps
        .iter()
        .map(|s| (s.history.as_slice(), s.timestep))
        .collect();
    let states = policy.state_embedding_batch(&inputs)?;

    let targets: Vec<Vec<f64>> = steps.iter().map(|s| s.goal.values().to_vec()).collect();
    let achievable_conds: Vec<Vec<f64>> = states
        .iter()
        .zip(&targets)
        .map(|(s, g)| {
            let mut c = s.clone();
            c.extend_from_slice(g);
            c
        })
        .collect();

    let mut achievable = Cvae::new(
        goal_dim,
        state_dim + goal_dim,
        config.clone(),
        config.seed.wrapping_add(101),
    );
    let achievable_trace = train_cvae(&mut achievable, &targets, &achievable_conds)?;

    let mut prior = Cvae::new(
        goal_dim,
        state_dim,
        config.clone(),
        config.seed.wrapping_add(202),
    );
    let prior_trace = train_cvae(&mut prior, &targets, &states)?;

    let mut goal_mean = vec![0.0; goal_dim];
    let mut goal_sq = vec![0.0; goal_dim];
    for t in &targets {
        for (i, v) in t.iter().enumerate() {
            goal_mean[i] += v;
            goal_sq[i] += v * v;
        }
    }
    let count = targets.len() as f64;
    let mut goal_std = vec![1.0; goal_dim];
    for i in 0..goal_dim {
        goal_mean[i] /= count;
        let var = (goal_sq[i] / count - goal_mean[i] * goal_mean[i]).max(0.0);
        goal_std[i] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
    }

    Ok((
        CvaePair {
            achievable,
            prior,
            state_dim,
            goal_dim,
            goal_mean,
            goal_std,
        },
        CvaeTrainReport {
            achievable_trace,
            prior_trace,
        },
    ))
}

/// Draws n samples of the achievable goal given a state embedding and an
/// input goal; returns the samples and their mean.
pub fn sample_achievable(
    pair: &CvaePair,
    state_emb: &[f64],
    input_goal: &[f64],
    n: usize,
    rng: &mut Pcg64Mcg,
) -> (Vec<GoalVector>, GoalVector) {
    let mut cond = Vec::with_capacity(pair.state_dim + pair.goal_dim);
    cond.extend_from_slice(state_emb);
    cond.extend_from_slice(input_goal);
    let mut samples = Vec::with_capacity(n);
    let mut mean = vec![0.0; pair.goal_dim];
    for _ in 0..n {
        let s = pair.achievable.sample(&cond, rng);
        for (m, v) in mean.iter_mut().zip(&s) {
            *m += v;
        }
        samples.push(GoalVector(s));
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    (samples, GoalVector(mean))
}

/// Indices of the non-dominated elements under componentwise ≥
/// dominance: g dominates h iff gᵢ ≥ hᵢ for every objective and g ≠ h.
pub fn pareto_non_dominated(values: &[GoalVector]) -> Vec<usize> {
    let dominates = |a: &GoalVector, b: &GoalVector| -> bool {
        a.values() != b.values()
            && a.values().iter().zip(b.values()).all(|(x, y)| x >= y)
    };
    (0..values.len())
        .filter(|&i| !values.iter().any(|other| dominates(other, &values[i])))
        .collect()
}

/// How the best candidate is picked from the non-dominated set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    /// Keep the Pareto-non-dominated set, then break ties by a
    /// lexicographic maximum over objectives (first objective first),
    /// with candidate order as the final tie-break.
    ParetoLexicographic,
    /// Keep the Pareto-non-dominated set, then break ties by the largest
    /// sum of per-dimension standardized components, so no objective's
    /// scale dominates the choice. Candidate order is the final
    /// tie-break.
    ParetoBalanced { mean: Vec<f64>, std: Vec<f64> },
    /// Maximize a fixed weighted sum of objectives.
    WeightedSum(Vec<f64>),
}

/// One goal-selection outcome: the chosen input goal, its estimated
/// achieved goal, and the full candidate set for audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalChoice {
    pub chosen_input_goal: GoalVector,
    pub expected_achieved: GoalVector,
    /// Number of candidate input goals drawn from the prior.
    pub k: usize,
    /// Decoder samples per candidate used to estimate expectations.
    pub n_samples: usize,
    /// (input goal, estimated achieved goal) pairs, in sample order.
    pub candidates: Vec<(GoalVector, GoalVector)>,
}

/// Picks the best candidate among (input goal, estimated achieved goal)
/// pairs. The choice always comes from the candidate set.
pub fn pareto_best(
    candidates: &[(GoalVector, GoalVector)],
    utility: &Utility,
) -> Result<GoalChoice, GoalSelError> {
    if candidates.is_empty() {
        return Err(GoalSelError::Empty("candidate set".into()));
    }
    let achieved: Vec<GoalVector> = candidates.iter().map(|(_, a)| a.clone()).collect();
    let best_idx = match utility {
        Utility::ParetoLexicographic => {
            let front = pareto_non_dominated(&achieved);
            let mut best = front[0];
            for &i in &front[1..] {
                if lex_greater(achieved[i].values(), achieved[best].values()) {
                    best = i;
                }
            }
            best
        }
        Utility::ParetoBalanced { mean, std } => {
            if mean.len() != achieved[0].dim() || std.len() != achieved[0].dim() {
                return Err(GoalSelError::Config(
                    "balanced utility stats must match the goal dimension".into(),
                ));
            }
            let score = |g: &GoalVector| -> f64 {
                g.values()
                    .iter()
                    .zip(mean.iter().zip(std))
                    .map(|(v, (m, s))| (v - m) / s)
                    .sum()
            };
            let front = pareto_non_dominated(&achieved);
            let mut best = front[0];
            let mut best_score = score(&achieved[best]);
            for &i in &front[1..] {
                let sc = score(&achieved[i]);
                if sc > best_score {
                    best = i;
                    best_score = sc;
                }
            }
            best
        }
        Utility::WeightedSum(w) => {
            if w.len() != achieved[0].dim() {
                return Err(GoalSelError::Config(
                    "utility weights must match the goal dimension".into(),
                ));
            }
            let mut best = 0;
            let mut best_score = achieved[0].dot(w);
            for (i, a) in achieved.iter().enumerate().skip(1) {
                let score = a.dot(w);
                if score > best_score {
                    best = i;
                    best_score = score;
                }
            }
            best
        }
    };
    Ok(GoalChoice {
        chosen_input_goal: candidates[best_idx].0.clone(),
        expected_achieved: candidates[best_idx].1.clone(),
        k: candidates.len(),
        n_samples: 0,
        candidates: candidates.to_vec(),
    })
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    false
}

/// The full goal-selection loop: draw K input goals from the prior,
/// estimate each one's expected achieved goal with `n_samples` decoder
/// draws, and select with the utility. Deterministic given the seed.
pub fn choose_goal(
    pair: &CvaePair,
    state_emb: &[f64],
    k: usize,
    n_samples: usize,
    utility: &Utility,
    seed: u64,
) -> Result<GoalChoice, GoalSelError> {
    if k == 0 {
        return Err(GoalSelError::Config("K must be at least 1".into()));
    }
    if n_samples == 0 {
        return Err(GoalSelError::Config("n_samples must be at least 1".into()));
    }
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let mut candidates = Vec::with_capacity(k);
    for _ in 0..k {
        let g_in = pair.prior.sample(state_emb, &mut rng);
        let (_, mean) = sample_achievable(pair, state_emb, &g_in, n_samples, &mut rng);
        candidates.push((GoalVector(g_in), mean));
    }
    let mut choice = pareto_best(&candidates, utility)?;
    choice.n_samples = n_samples;
    Ok(choice)
}

const CVAE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CvaeTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CvaeCheckpoint {
    format_version: u32,
    state_dim: usize,
    goal_dim: usize,
    config: CvaeConfig,
    goal_mean: Vec<f64>,
    goal_std: Vec<f64>,
    achievable: Vec<CvaeTensor>,
    prior: Vec<CvaeTensor>,
}

/// Saves both CVAEs in the same JSON tensor-container format as policy
/// checkpoints.
pub fn save_cvae_pair(pair: &CvaePair, path: &Path) -> Result<(), GoalSelError> {
    let dump = |cvae: &Cvae| -> Vec<CvaeTensor> {
        cvae.params
            .iter()
            .map(|(name, m)| CvaeTensor {
                name: name.clone(),
                rows: m.rows,
                cols: m.cols,
                data: m.data.clone(),
            })
            .collect()
    };
    let ckpt = CvaeCheckpoint {
        format_version: CVAE_FORMAT_VERSION,
        state_dim: pair.state_dim,
        goal_dim: pair.goal_dim,
        config: pair.achievable.config.clone(),
        goal_mean: pair.goal_mean.clone(),
        goal_std: pair.goal_std.clone(),
        achievable: dump(&pair.achievable),
        prior: dump(&pair.prior),
    };
    std::fs::write(path, serde_json::to_string(&ckpt).expect("serializable"))?;
    Ok(())
}

pub fn load_cvae_pair(path: &Path) -> Result<CvaePair, GoalSelError> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: CvaeCheckpoint =
        serde_json::from_str(&text).map_err(|e| GoalSelError::Corrupt(e.to_string()))?;
    if ckpt.format_version != CVAE_FORMAT_VERSION {
        return Err(GoalSelError::Version {
            expected: CVAE_FORMAT_VERSION,
            found: ckpt.format_version,
        });
    }
    let restore = |template: &mut Cvae, tensors: Vec<CvaeTensor>| -> Result<(), GoalSelError> {
        for t in tensors {
            let slot = template
                .params
                .iter_mut()
                .find(|(n, _)| *n == t.name)
                .ok_or_else(|| GoalSelError::Corrupt(format!("unknown tensor {}", t.name)))?;
            if slot.1.rows != t.rows || slot.1.cols != t.cols || t.data.len() != t.rows * t.cols {
                return Err(GoalSelError::Corrupt(format!(
                    "tensor {} has shape {}x{}, expected {}x{}",
                    t.name, t.rows, t.cols, slot.1.rows, slot.1.cols
                )));
            }
            slot.1.data = t.data;
        }
        Ok(())
    };
    let mut achievable = Cvae::new(
        ckpt.goal_dim,
        ckpt.state_dim + ckpt.goal_dim,
        ckpt.config.clone(),
        0,
    );
    let mut prior = Cvae::new(ckpt.goal_dim, ckpt.state_dim, ckpt.config.clone(), 0);
    restore(&mut achievable, ckpt.achievable)?;
    restore(&mut prior, ckpt.prior)?;
    Ok(CvaePair {
        achievable,
        prior,
        state_dim: ckpt.state_dim,
        goal_dim: ckpt.goal_dim,
        goal_mean: ckpt.goal_mean,
        goal_std: ckpt.goal_std,
    })
}
