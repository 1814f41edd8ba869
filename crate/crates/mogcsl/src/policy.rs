//! The goal-conditioned next-action model and its training loop.
//!
//! The model scores the next action from three ingredients: a sequence
//! encoding of the recent item history (transformer encoder or GRU), a
//! timestep embedding, and a goal embedding produced by one fully
//! connected layer. The three parts are either attended over as tokens
//! by a self-attention block and flattened, or simply concatenated; an
//! MLP maps the result to one logit per item and a softmax yields the
//! action distribution. Training minimizes the mean cross-entropy of the
//! demonstrated actions by minibatch Adam.
//!
//! The scalarized-goal baseline (MOPRL) is the same model trained on
//! goals collapsed to a weighted sum via [`scalarize_goals`].

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{GoalVector, RelabeledStep};
use crate::nn::{Adam, Graph, Mat, NodeId, init_uniform};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown item id {id} (items run 1..={n_items})")]
    UnknownItem { id: u32, n_items: usize },
    #[error("goal has {found} components, model expects {expected}")]
    GoalDim { expected: usize, found: usize },
    #[error(
        "training loss became non-finite at epoch {epoch}, batch {batch} (learning rate {learning_rate})"
    )]
    NanLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("checkpoint format version {found}, this build reads {expected}")]
    Version { expected: u32, found: u32 },
    #[error("checkpoint shape mismatch for {field}: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    Shape {
        field: String,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sequence encoder choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderKind {
    Transformer {
        depth: usize,
        heads: usize,
        ffn_hidden: usize,
    },
    Gru,
}

/// Whether the model conditions on the full goal vector or on a
/// scalarized goal (the MOPRL baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GoalMode {
    Vector,
    Scalar { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Item count N; history ids run 1..=N, 0 is padding.
    pub n_items: usize,
    /// Objective count d of the raw data.
    pub reward_dim: usize,
    /// History window L; longer histories keep the most recent L items.
    pub window: usize,
    pub item_embed_dim: usize,
    pub goal_embed_dim: usize,
    pub timestep_embed_dim: usize,
    pub encoder: EncoderKind,
    /// Attend over (sequence, timestep, goal) as three tokens before the
    /// MLP; requires the three embedding dims to match.
    pub attention_block: bool,
    pub mlp_hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping patience on validation loss (0 disables).
    pub patience: usize,
    pub seed: u64,
    pub goal_mode: GoalMode,
    /// Standardize goal inputs per dimension with training-set mean/std
    /// before the goal embedding layer. Raw goals when false.
    pub standardize_goals: bool,
    /// Timestep embedding rows; later timesteps clamp to the last row.
    pub max_timestep: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            n_items: 0,
            reward_dim: 2,
            window: 10,
            item_embed_dim: 64,
            goal_embed_dim: 64,
            timestep_embed_dim: 64,
            encoder: EncoderKind::Transformer {
                depth: 1,
                heads: 1,
                ffn_hidden: 128,
            },
            attention_block: true,
            mlp_hidden_sizes: vec![128],
            // Tuned over {1e-4, 5e-4, 1e-3, 5e-3} at full scale.
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            goal_mode: GoalMode::Vector,
            standardize_goals: true,
            max_timestep: 64,
        }
    }
}

impl PolicyConfig {
    /// Width of the goal input (d in vector mode, 1 in scalar mode).
    pub fn goal_input_dim(&self) -> usize {
        match self.goal_mode {
            GoalMode::Vector => self.reward_dim,
            GoalMode::Scalar { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.n_items == 0 {
            return Err(PolicyError::Config("n_items must be positive".into()));
        }
        if self.reward_dim == 0
            || self.window == 0
            || self.item_embed_dim == 0
            || self.goal_embed_dim == 0
            || self.timestep_embed_dim == 0
            || self.batch_size == 0
            || self.max_timestep == 0
        {
            return Err(PolicyError::Config("all dimensions must be positive".into()));
        }
        if let EncoderKind::Transformer { depth, heads, ffn_hidden } = &self.encoder {
            if *depth == 0 || *heads == 0 || *ffn_hidden == 0 {
                return Err(PolicyError::Config(
                    "transformer depth, heads, and ffn width must be positive".into(),
                ));
            }
            if self.item_embed_dim % heads != 0 {
                return Err(PolicyError::Config(format!(
                    "heads ({heads}) must divide item_embed_dim ({})",
                    self.item_embed_dim
                )));
            }
        }
        if self.attention_block
            && (self.item_embed_dim != self.goal_embed_dim
                || self.item_embed_dim != self.timestep_embed_dim)
        {
            return Err(PolicyError::Config(
                "the attention block treats (sequence, timestep, goal) as tokens; their embedding dims must match".into(),
            ));
        }
        if let GoalMode::Scalar { weights } = &self.goal_mode {
            validate_weights(weights, self.reward_dim)?;
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PolicyError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn validate_weights(weights: &[f64], dim: usize) -> Result<(), PolicyError> {
    if weights.len() != dim {
        return Err(PolicyError::Config(format!(
            "scalarization weights have {} components, reward dim is {dim}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(PolicyError::Config(
            "scalarization weights must lie in [0, 1]".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(PolicyError::Config(format!(
            "scalarization weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Named parameter tensors in a stable iteration order.
#[derive(Debug, Clone)]
pub(crate) struct ParamSet {
    entries: Vec<(String, Mat)>,
}

impl ParamSet {
    fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, mat: Mat) -> usize {
        self.entries.push((name.into(), mat));
        self.entries.len() - 1
    }

    pub(crate) fn get(&self, idx: usize) -> &Mat {
        &self.entries[idx].1
    }

    #[cfg(test)]
    pub(crate) fn get_mut(&mut self, idx: usize) -> &mut Mat {
        &mut self.entries[idx].1
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Mat)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    pub(crate) fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Indices of each named parameter within the [`ParamSet`].
#[derive(Debug, Clone)]
struct Layout {
    item_emb: usize,
    pos_emb: Option<usize>,
    encoder_layers: Vec<TransformerLayerIdx>,
    gru: Option<GruIdx>,
    time_emb: usize,
    goal_w: usize,
    goal_b: usize,
    attn: Option<AttnBlockIdx>,
    mlp: Vec<(usize, usize)>,
    out_w: usize,
    out_b: usize,
}

#[derive(Debug, Clone)]
struct TransformerLayerIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln1_g: usize,
    ln1_b: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone)]
struct GruIdx {
    wxz: usize,
    whz: usize,
    bz: usize,
    wxr: usize,
    whr: usize,
    br: usize,
    wxh: usize,
    whh: usize,
    bh: usize,
}

#[derive(Debug, Clone)]
struct AttnBlockIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln_g: usize,
    ln_b: usize,
}

/// The goal-conditioned next-action predictor.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    pub(crate) params: ParamSet,
    layout: Layout,
    /// Per-dimension standardization of goal inputs (identity when
    /// standardization is off or stats have not been fitted).
    pub goal_mean: Vec<f64>,
    pub goal_std: Vec<f64>,
}

impl PolicyModel {
    /// Builds a freshly initialized model. The output layer starts at
    /// zero so an untrained model predicts the uniform distribution.
    pub fn new(config: PolicyConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut rng = Pcg64Mcg::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let d_item = config.item_embed_dim;

        let mut item_emb = init_uniform(&mut rng, config.n_items + 1, d_item);
        for v in item_emb.row_mut(0) {
            *v = 0.0; // padding row
        }
        let item_emb = params.add("item_emb", item_emb);

        let (pos_emb, encoder_layers, gru) = match &config.encoder {
            EncoderKind::Transformer { depth, ffn_hidden, .. } => {
                let pos = params.add("pos_emb", init_uniform(&mut rng, config.window, d_item));
                let mut layers = Vec::with_capacity(*depth);
                for l in 0..*depth {
                    let p = format!("enc{l}");
                    layers.push(TransformerLayerIdx {
                        wq: params.add(format!("{p}.wq"), init_uniform(&mut rng, d_item, d_item)),
                        wk: params.add(format!("{p}.wk"), init_uniform(&mut rng, d_item, d_item)),
                        wv: params.add(format!("{p}.wv"), init_uniform(&mut rng, d_item, d_item)),
                        wo: params.add(format!("{p}.wo"), init_uniform(&mut rng, d_item, d_item)),
                        ln1_g: params
                            .add(format!("{p}.ln1_g"), Mat::from_vec(1, d_item, vec![1.0; d_item])),
                        ln1_b: params.add(format!("{p}.ln1_b"), Mat::zeros(1, d_item)),
                        ffn_w1: params
                            .add(format!("{p}.ffn_w1"), init_uniform(&mut rng, d_item, *ffn_hidden)),
                        ffn_b1: params.add(format!("{p}.ffn_b1"), Mat::zeros(1, *ffn_hidden)),
                        ffn_w2: params
                            .add(format!("{p}.ffn_w2"), init_uniform(&mut rng, *ffn_hidden, d_item)),
                        ffn_b2: params.add(format!("{p}.ffn_b2"), Mat::zeros(1, d_item)),
                        ln2_g: params
                            .add(format!("{p}.ln2_g"), Mat::from_vec(1, d_item, vec![1.0; d_item])),
                        ln2_b: params.add(format!("{p}.ln2_b"), Mat::zeros(1, d_item)),
                    });
                }
                (Some(pos), layers, None)
            }
            EncoderKind::Gru => {
                let h = d_item;
                let gru = GruIdx {
                    wxz: params.add("gru.wxz", init_uniform(&mut rng, d_item, h)),
                    whz: params.add("gru.whz", init_uniform(&mut rng, h, h)),
                    bz: params.add("gru.bz", Mat::zeros(1, h)),
                    wxr: params.add("gru.wxr", init_uniform(&mut rng, d_item, h)),
                    whr: params.add("gru.whr", init_uniform(&mut rng, h, h)),
                    br: params.add("gru.br", Mat::zeros(1, h)),
                    wxh: params.add("gru.wxh", init_uniform(&mut rng, d_item, h)),
                    whh: params.add("gru.whh", init_uniform(&mut rng, h, h)),
                    bh: params.add("gru.bh", Mat::zeros(1, h)),
                };
                (None, Vec::new(), Some(gru))
            }
        };

        let time_emb = params.add(
            "time_emb",
            init_uniform(&mut rng, config.max_timestep, config.timestep_embed_dim),
        );
        let goal_w = params.add(
            "goal_w",
            init_uniform(&mut rng, config.goal_input_dim(), config.goal_embed_dim),
        );
        let goal_b = params.add("goal_b", Mat::zeros(1, config.goal_embed_dim));

        let attn = if config.attention_block {
            let d = d_item;
            Some(AttnBlockIdx {
                wq: params.add("attn.wq", init_uniform(&mut rng, d, d)),
                wk: params.add("attn.wk", init_uniform(&mut rng, d, d)),
                wv: params.add("attn.wv", init_uniform(&mut rng, d, d)),
                wo: params.add("attn.wo", init_uniform(&mut rng, d, d)),
                ln_g: params.add("attn.ln_g", Mat::from_vec(1, d, vec![1.0; d])),
                ln_b: params.add("attn.ln_b", Mat::zeros(1, d)),
            })
        } else {
            None
        };

        let state_dim = if config.attention_block {
            3 * d_item
        } else {
            d_item + config.timestep_embed_dim + config.goal_embed_dim
        };
        let mut mlp = Vec::new();
        let mut in_dim = state_dim;
        for (i, &h) in config.mlp_hidden_sizes.iter().enumerate() {
            if h == 0 {
                return Err(PolicyError::Config("mlp hidden sizes must be positive".into()));
            }
            let w = params.add(format!("mlp{i}.w"), init_uniform(&mut rng, in_dim, h));
            let b = params.add(format!("mlp{i}.b"), Mat::zeros(1, h));
            mlp.push((w, b));
            in_dim = h;
        }
        let out_w = params.add("out.w", Mat::zeros(in_dim, config.n_items));
        let out_b = params.add("out.b", Mat::zeros(1, config.n_items));

        let gin = config.goal_input_dim();
        Ok(PolicyModel {
            layout: Layout {
                item_emb,
                pos_emb,
                encoder_layers,
                gru,
                time_emb,
                goal_w,
                goal_b,
                attn,
                mlp,
                out_w,
                out_b,
            },
            config,
            params,
            goal_mean: vec![0.0; gin],
            goal_std: vec![1.0; gin],
        })
    }

    /// Standardizes a raw goal for model input.
    fn standardized(&self, goal: &[f64]) -> Vec<f64> {
        if !self.config.standardize_goals {
            return goal.to_vec();
        }
        goal.iter()
            .zip(self.goal_mean.iter().zip(&self.goal_std))
            .map(|(g, (m, s))| (g - m) / s)
            .collect()
    }

    fn prepare(
        &self,
        inputs: &[(&[u32], usize, &[f64])],
        actions: Option<&[u32]>,
    ) -> Result<PreparedBatch, PolicyError> {
        let cfg = &self.config;
        let window = cfg.window;
        let gin = cfg.goal_input_dim();
        let batch = inputs.len();
        let mut flat_ids = Vec::with_capacity(batch * window);
        let mut mask = Vec::with_capacity(batch * window);
        let mut time_idx = Vec::with_capacity(batch);
        let mut goals = Mat::zeros(batch, gin);
        let mut clamped = 0usize;

        for (b, (history, timestep, goal)) in inputs.iter().enumerate() {
            if goal.len() != gin {
                return Err(PolicyError::GoalDim {
                    expected: gin,
                    found: goal.len(),
                });
            }
            if *timestep == 0 {
                return Err(PolicyError::Config("timestep must be >= 1".into()));
            }
            let recent = if history.len() > window {
                &history[history.len() - window..]
            } else {
                history
            };
            let pad = window - recent.len();
            for _ in 0..pad {
                flat_ids.push(0);
                mask.push(false);
            }
            for &item in recent {
                if item == 0 || item as usize > cfg.n_items {
                    return Err(PolicyError::UnknownItem {
                        id: item,
                        n_items: cfg.n_items,
                    });
                }
                flat_ids.push(item as usize);
                mask.push(true);
            }
            if *timestep > cfg.max_timestep {
                clamped += 1;
            }
            time_idx.push((*timestep).min(cfg.max_timestep) - 1);
            goals.row_mut(b).copy_from_slice(&self.standardized(goal));
        }
        if clamped > 0 {
            log::warn!(
                "{clamped} timestep(s) beyond the embedding table ({}); clamped to the last row",
                cfg.max_timestep
            );
        }
        let actions = match actions {
            None => Vec::new(),
            Some(acts) => {
                let mut v = Vec::with_capacity(acts.len());
                for &a in acts {
                    if a == 0 || a as usize > cfg.n_items {
                        return Err(PolicyError::UnknownItem {
                            id: a,
                            n_items: cfg.n_items,
                        });
                    }
                    v.push((a - 1) as usize);
                }
                v
            }
        };
        Ok(PreparedBatch {
            batch,
            flat_ids,
            mask,
            time_idx,
            goals,
            actions,
        })
    }

    fn insert_leaves(&self, g: &mut Graph) -> Vec<NodeId> {
        (0..self.params.len())
            .map(|i| g.leaf(self.params.get(i).clone()))
            .collect()
    }

    /// Builds the forward graph for a prepared batch.
    fn forward(&self, g: &mut Graph, leaves: &[NodeId], batch: &PreparedBatch) -> ForwardNodes {
        let cfg = &self.config;
        let lay = &self.layout;
        let b = batch.batch;
        let l = cfg.window;

        // Sequence encoding of the item history.
        let mut x = g.gather_rows(leaves[lay.item_emb], batch.flat_ids.clone());
        let seq_enc = match &cfg.encoder {
            EncoderKind::Transformer { depth, heads, .. } => {
                let pos = g.tile_rows(leaves[lay.pos_emb.unwrap()], b);
                x = g.add(x, pos);
                for layer in &lay.encoder_layers[..*depth] {
                    let att = g.attention(
                        x,
                        leaves[layer.wq],
                        leaves[layer.wk],
                        leaves[layer.wv],
                        b,
                        l,
                        *heads,
                        Some(batch.mask.clone()),
                    );
                    let proj = g.matmul(att, leaves[layer.wo]);
                    let res = g.add(x, proj);
                    x = g.layer_norm(res, leaves[layer.ln1_g], leaves[layer.ln1_b]);
                    let h1 = g.matmul(x, leaves[layer.ffn_w1]);
                    let h1 = g.add_row(h1, leaves[layer.ffn_b1]);
                    let h1 = g.relu(h1);
                    let h2 = g.matmul(h1, leaves[layer.ffn_w2]);
                    let h2 = g.add_row(h2, leaves[layer.ffn_b2]);
                    let res = g.add(x, h2);
                    x = g.layer_norm(res, leaves[layer.ln2_g], leaves[layer.ln2_b]);
                }
                // The encoding at the last (most recent) position.
                let last: Vec<usize> = (0..b).map(|i| i * l + l - 1).collect();
                g.gather_rows(x, last)
            }
            EncoderKind::Gru => {
                let gru = lay.gru.as_ref().unwrap();
                g.gru(
                    x,
                    leaves[gru.wxz],
                    leaves[gru.whz],
                    leaves[gru.bz],
                    leaves[gru.wxr],
                    leaves[gru.whr],
                    leaves[gru.br],
                    leaves[gru.wxh],
                    leaves[gru.whh],
                    leaves[gru.bh],
                    b,
                    l,
                )
            }
        };

        let time = g.gather_rows(leaves[lay.time_emb], batch.time_idx.clone());
        let goals = g.leaf(batch.goals.clone());
        let goal_emb = g.matmul(goals, leaves[lay.goal_w]);
        let goal_emb = g.add_row(goal_emb, leaves[lay.goal_b]);

        // State+goal representation: three tokens attended and
        // flattened, or a plain concatenation.
        let state = match &lay.attn {
            Some(attn) => {
                let tokens = g.interleave_rows(vec![seq_enc, time, goal_emb]);
                let att = g.attention(
                    tokens,
                    leaves[attn.wq],
                    leaves[attn.wk],
                    leaves[attn.wv],
                    b,
                    3,
                    1,
                    None,
                );
                let proj = g.matmul(att, leaves[attn.wo]);
                let res = g.add(tokens, proj);
                let normed = g.layer_norm(res, leaves[attn.ln_g], leaves[attn.ln_b]);
                g.reshape(normed, b, 3 * cfg.item_embed_dim)
            }
            None => g.concat_cols(vec![seq_enc, time, goal_emb]),
        };

        let mut h = state;
        for &(w, bias) in &lay.mlp {
            h = g.matmul(h, leaves[w]);
            h = g.add_row(h, leaves[bias]);
            h = g.relu(h);
        }
        let logits = g.matmul(h, leaves[lay.out_w]);
        let logits = g.add_row(logits, leaves[lay.out_b]);
        ForwardNodes {
            state,
            seq_enc,
            time,
            logits,
        }
    }

    /// The state+goal representation fed to the MLP head.
    pub fn encode_state(
        &self,
        history: &[u32],
        timestep: usize,
        goal: &[f64],
    ) -> Result<Vec<f64>, PolicyError> {
        let batch = self.prepare(&[(history, timestep, goal)], None)?;
        let mut g = Graph::new();
        let leaves = self.insert_leaves(&mut g);
        let nodes = self.forward(&mut g, &leaves, &batch);
        Ok(g.value(nodes.state).row(0).to_vec())
    }

    /// The goal-free state representation (sequence encoding and timestep
    /// embedding, concatenated). This is the conditioning input used by
    /// downstream goal models.
    pub fn state_embedding(
        &self,
        history: &[u32],
        timestep: usize,
    ) -> Result<Vec<f64>, PolicyError> {
        Ok(self.state_embedding_batch(&[(history, timestep)])?.pop().unwrap())
    }

    /// Batched [`PolicyModel::state_embedding`].
    pub fn state_embedding_batch(
        &self,
        inputs: &[(&[u32], usize)],
    ) -> Result<Vec<Vec<f64>>, PolicyError> {
        let goal = vec![0.0; self.config.goal_input_dim()];
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.batch_size.max(1)) {
            let refs: Vec<(&[u32], usize, &[f64])> =
                chunk.iter().map(|(h, t)| (*h, *t, goal.as_slice())).collect();
            let batch = self.prepare(&refs, None)?;
            let mut g = Graph::new();
            let leaves = self.insert_leaves(&mut g);
            let nodes = self.forward(&mut g, &leaves, &batch);
            for r in 0..batch.batch {
                let mut v = g.value(nodes.seq_enc).row(r).to_vec();
                v.extend_from_slice(g.value(nodes.time).row(r));
                out.push(v);
            }
        }
        Ok(out)
    }

    /// Width of [`PolicyModel::state_embedding`].
    pub fn state_embedding_dim(&self) -> usize {
        self.config.item_embed_dim + self.config.timestep_embed_dim
    }

    /// Probability distribution over the N actions.
    pub fn predict(
        &self,
        history: &[u32],
        timestep: usize,
        goal: &[f64],
    ) -> Result<Vec<f64>, PolicyError> {
        Ok(self
            .predict_batch(&[(history, timestep, goal)])?
            .pop()
            .unwrap())
    }

    /// Batched [`PolicyModel::predict`].
    pub fn predict_batch(
        &self,
        inputs: &[(&[u32], usize, &[f64])],
    ) -> Result<Vec<Vec<f64>>, PolicyError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.batch_size.max(1)) {
            let batch = self.prepare(chunk, None)?;
            let mut g = Graph::new();
            let leaves = self.insert_leaves(&mut g);
            let nodes = self.forward(&mut g, &leaves, &batch);
            let probs = Graph::softmax_rows(g.value(nodes.logits));
            for r in 0..batch.batch {
                out.push(probs.row(r).to_vec());
            }
        }
        Ok(out)
    }

    /// Mean cross-entropy of the demonstrated actions (forward only).
    pub fn dataset_loss(&self, steps: &[RelabeledStep]) -> Result<f64, PolicyError> {
        if steps.is_empty() {
            return Err(PolicyError::Empty("dataset_loss".into()));
        }
        let mut total = 0.0;
        for chunk in steps.chunks(self.config.batch_size.max(1)) {
            let (inputs, actions) = split_steps(chunk);
            let batch = self.prepare(&inputs, Some(&actions))?;
            let mut g = Graph::new();
            let leaves = self.insert_leaves(&mut g);
            let nodes = self.forward(&mut g, &leaves, &batch);
            let loss = g.softmax_cross_entropy(nodes.logits, batch.actions.clone());
            total += g.value(loss).data.iter().sum::<f64>();
        }
        Ok(total / steps.len() as f64)
    }

    /// Full-batch loss and analytic gradients in parameter order (used by
    /// the finite-difference verification).
    pub fn loss_and_gradients(
        &self,
        steps: &[RelabeledStep],
    ) -> Result<(f64, Vec<Mat>), PolicyError> {
        let (inputs, actions) = split_steps(steps);
        let batch = self.prepare(&inputs, Some(&actions))?;
        let mut g = Graph::new();
        let leaves = self.insert_leaves(&mut g);
        let nodes = self.forward(&mut g, &leaves, &batch);
        let loss = g.softmax_cross_entropy(nodes.logits, batch.actions.clone());
        let mean = g.mean_all(loss);
        let value = g.value(mean).data[0];
        g.backward(mean);
        let grads = leaves.iter().map(|&id| g.grad(id)).collect();
        Ok((value, grads))
    }

    /// Parameter names and shapes, in optimizer order.
    pub fn param_summary(&self) -> Vec<(String, usize, usize)> {
        self.params
            .iter()
            .map(|(n, m)| (n.to_string(), m.rows, m.cols))
            .collect()
    }

    /// Reads (and optionally overwrites) one parameter entry, addressed
    /// in [`PolicyModel::param_summary`] order. Returns the value before
    /// any write. Supports external finite-difference verification of
    /// the analytic gradients.
    pub fn with_param_entry(&mut self, param: usize, entry: usize, set: Option<f64>) -> f64 {
        let mat = self
            .params
            .iter_mut()
            .nth(param)
            .map(|(_, m)| m)
            .expect("parameter index in range");
        let old = mat.data[entry];
        if let Some(v) = set {
            mat.data[entry] = v;
        }
        old
    }

    /// Fits goal standardization statistics from a training set.
    fn fit_goal_stats(&mut self, steps: &[RelabeledStep]) {
        let gin = self.config.goal_input_dim();
        let mut mean = vec![0.0; gin];
        let mut sq = vec![0.0; gin];
        for s in steps {
            for (i, v) in s.goal.values().iter().enumerate() {
                mean[i] += v;
                sq[i] += v * v;
            }
        }
        let n = steps.len() as f64;
        for i in 0..gin {
            mean[i] /= n;
            let var = (sq[i] / n - mean[i] * mean[i]).max(0.0);
            let std = var.sqrt();
            sq[i] = if std > 1e-9 { std } else { 1.0 };
        }
        self.goal_mean = mean;
        self.goal_std = sq;
    }
}

struct ForwardNodes {
    state: NodeId,
    seq_enc: NodeId,
    time: NodeId,
    logits: NodeId,
}

struct PreparedBatch {
    batch: usize,
    flat_ids: Vec<usize>,
    mask: Vec<bool>,
    time_idx: Vec<usize>,
    goals: Mat,
    actions: Vec<usize>,
}

fn split_steps(steps: &[RelabeledStep]) -> (Vec<(&[u32], usize, &[f64])>, Vec<u32>) {
    let inputs = steps
        .iter()
        .map(|s| (s.history.as_slice(), s.timestep, s.goal.values()))
        .collect();
    let actions = steps.iter().map(|s| s.action).collect();
    (inputs, actions)
}

/// Per-epoch training trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
    pub wall_seconds: f64,
    pub epochs_run: usize,
    pub early_stopped: bool,
}

/// Trains the model by minibatch Adam on the mean cross-entropy of the
/// demonstrated actions. Training halts at `max_epochs` or when the
/// validation loss fails to improve for `patience` consecutive epochs;
/// the parameters of the best validation epoch are restored.
pub fn train(
    model: &mut PolicyModel,
    train_steps: &[RelabeledStep],
    valid_steps: &[RelabeledStep],
) -> Result<TrainReport, PolicyError> {
    if train_steps.is_empty() {
        return Err(PolicyError::Empty("training set".into()));
    }
    let started = Instant::now();
    let cfg = model.config.clone();
    if cfg.standardize_goals {
        model.fit_goal_stats(train_steps);
    }

    let mut rng = Pcg64Mcg::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_steps.len()).collect();
    let mut train_losses = Vec::new();
    let mut valid_losses = Vec::new();
    let mut best_valid = f64::INFINITY;
    let mut best_params: Option<ParamSet> = None;
    let mut since_best = 0usize;
    let mut early_stopped = false;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_steps: Vec<RelabeledStep> =
                chunk.iter().map(|&i| train_steps[i].clone()).collect();
            let (inputs, actions) = split_steps(&batch_steps);
            let prepared = model.prepare(&inputs, Some(&actions))?;

            let mut g = Graph::new();
            let leaves = model.insert_leaves(&mut g);
            let nodes = model.forward(&mut g, &leaves, &prepared);
            let loss = g.softmax_cross_entropy(nodes.logits, prepared.actions.clone());
            let mean = g.mean_all(loss);
            let loss_value = g.value(mean).data[0];
            if !loss_value.is_finite() {
                return Err(PolicyError::NanLoss {
                    epoch,
                    batch: batch_idx,
                    learning_rate: cfg.learning_rate,
                });
            }
            epoch_loss += loss_value * chunk.len() as f64;
            g.backward(mean);
            let grads: Vec<Mat> = leaves.iter().map(|&id| g.grad(id)).collect();
            let mut param_refs: Vec<&mut Mat> =
                model.params.iter_mut().map(|(_, m)| m).collect();
            adam.step(&mut param_refs, &grads);
        }
        train_losses.push(epoch_loss / train_steps.len() as f64);

        if !valid_steps.is_empty() {
            let vl = model.dataset_loss(valid_steps)?;
            valid_losses.push(vl);
            if vl < best_valid {
                best_valid = vl;
                best_params = Some(model.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    early_stopped = true;
                    break;
                }
            }
        }
    }
    if let Some(best) = best_params {
        model.params = best;
    }
    Ok(TrainReport {
        epochs_run: train_losses.len(),
        train_losses,
        valid_losses,
        wall_seconds: started.elapsed().as_secs_f64(),
        early_stopped,
    })
}

/// Replaces each goal by its dot product with the weight vector,
/// producing the 1-dimensional goals the MOPRL baseline trains on.
pub fn scalarize_goals(
    steps: &[RelabeledStep],
    weights: &[f64],
) -> Result<Vec<RelabeledStep>, PolicyError> {
    if steps.is_empty() {
        return Ok(Vec::new());
    }
    validate_weights(weights, steps[0].goal.dim())?;
    Ok(steps
        .iter()
        .map(|s| RelabeledStep {
            history: s.history.clone(),
            timestep: s.timestep,
            action: s.action,
            goal: GoalVector(vec![s.goal.dot(weights)]),
        })
        .collect())
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: PolicyConfig,
    goal_mean: Vec<f64>,
    goal_std: Vec<f64>,
    params: Vec<NamedTensor>,
}

/// Writes a self-describing JSON checkpoint (config, standardization
/// stats, and parameter tensors).
pub fn save_model(model: &PolicyModel, path: &Path) -> Result<(), PolicyError> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        goal_mean: model.goal_mean.clone(),
        goal_std: model.goal_std.clone(),
        params: model
            .params
            .iter()
            .map(|(name, m)| NamedTensor {
                name: name.to_string(),
                rows: m.rows,
                cols: m.cols,
                data: m.data.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&ckpt).expect("checkpoint serialization cannot fail");
    std::fs::write(path, json)?;
    Ok(())
}

/// Loads a checkpoint, validating the format version and every tensor
/// shape against the stored config.
pub fn load_model(path: &Path) -> Result<PolicyModel, PolicyError> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| PolicyError::Corrupt(e.to_string()))?;
    if ckpt.format_version != CHECKPOINT_VERSION {
        return Err(PolicyError::Version {
            expected: CHECKPOINT_VERSION,
            found: ckpt.format_version,
        });
    }
    let mut model = PolicyModel::new(ckpt.config)?;
    let gin = model.config.goal_input_dim();
    if ckpt.goal_mean.len() != gin || ckpt.goal_std.len() != gin {
        return Err(PolicyError::Corrupt(
            "goal standardization stats have the wrong dimension".into(),
        ));
    }
    model.goal_mean = ckpt.goal_mean;
    model.goal_std = ckpt.goal_std;

    let mut by_name: std::collections::HashMap<String, NamedTensor> = ckpt
        .params
        .into_iter()
        .map(|t| (t.name.clone(), t))
        .collect();
    for (name, mat) in model.params.iter_mut() {
        let tensor = by_name
            .remove(name)
            .ok_or_else(|| PolicyError::MissingParam(name.to_string()))?;
        if tensor.rows != mat.rows || tensor.cols != mat.cols {
            return Err(PolicyError::Shape {
                field: name.to_string(),
                expected_rows: mat.rows,
                expected_cols: mat.cols,
                found_rows: tensor.rows,
                found_cols: tensor.cols,
            });
        }
        if tensor.data.len() != tensor.rows * tensor.cols {
            return Err(PolicyError::Corrupt(format!("tensor {name} has wrong length")));
        }
        mat.data = tensor.data;
    }
    Ok(model)
}
