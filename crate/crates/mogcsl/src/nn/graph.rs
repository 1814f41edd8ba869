//! Define-by-run reverse-mode autodiff over [`Mat`] values.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its
//! forward value, so node indices are already a topological order and
//! [`Graph::backward`] is a single reverse sweep. Sequence operations
//! (self-attention, GRU) treat their input as `batch` stacked blocks of
//! `seq` rows and carry the intermediates they need for the backward
//! pass.

use super::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

struct Node {
    value: Mat,
    grad: Option<Mat>,
    op: Op,
}

struct AttnCache {
    /// Per (batch, head): query/key/value blocks (seq × head_dim) and
    /// softmax probabilities (seq × seq).
    q: Vec<Mat>,
    k: Vec<Mat>,
    v: Vec<Mat>,
    probs: Vec<Mat>,
}

struct GruCache {
    /// Per (batch, timestep): gate activations and hidden states.
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    cand: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>, // h[b * (seq + 1) + t] with h[.. + 0] = 0
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// X + row-broadcast bias (bias is 1×cols).
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Clamp(NodeId, f64, f64),
    /// Select rows of the source by index (embedding lookup and
    /// last-position extraction).
    GatherRows(NodeId, Vec<usize>),
    /// Stack `times` vertical copies of the source.
    TileRows(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    /// k sources of identical shape n×d interleaved into (n·k)×d:
    /// output row `i*k + j` is row i of source j.
    InterleaveRows(Vec<NodeId>),
    Reshape(NodeId),
    RowSum(NodeId),
    MeanAll(NodeId),
    /// Per-row softmax + cross-entropy against a target class, yielding
    /// an n×1 loss column. Caches the softmax probabilities.
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Mat,
    },
    /// Row-wise layer normalization with learned gain/bias (each 1×d).
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    /// Multi-head self-attention over `batch` blocks of `seq` rows.
    /// `mask[b*seq + t]` marks valid (attendable) positions.
    Attention {
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
        batch: usize,
        seq: usize,
        heads: usize,
        cache: AttnCache,
    },
    /// GRU over `batch` blocks of `seq` rows; emits the final hidden
    /// state per block (batch × hidden).
    Gru {
        x: NodeId,
        wxz: NodeId,
        whz: NodeId,
        bz: NodeId,
        wxr: NodeId,
        whr: NodeId,
        br: NodeId,
        wxh: NodeId,
        whh: NodeId,
        bh: NodeId,
        batch: usize,
        seq: usize,
        cache: GruCache,
    },
}

pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Gradient of the scalar objective w.r.t. this node (zeros if it
    /// never received any).
    pub fn grad(&self, id: NodeId) -> Mat {
        let n = &self.nodes[id.0];
        n.grad
            .clone()
            .unwrap_or_else(|| Mat::zeros(n.value.rows, n.value.cols))
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert!(self.value(a).same_shape(self.value(b)), "add shape");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert!(self.value(a).same_shape(self.value(b)), "sub shape");
        let vb = self.value(b);
        let value = Mat {
            rows: vb.rows,
            cols: vb.cols,
            data: self
                .value(a)
                .data
                .iter()
                .zip(&vb.data)
                .map(|(x, y)| x - y)
                .collect(),
        };
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert!(self.value(a).same_shape(self.value(b)), "mul shape");
        let vb = self.value(b);
        let value = Mat {
            rows: vb.rows,
            cols: vb.cols,
            data: self
                .value(a)
                .data
                .iter()
                .zip(&vb.data)
                .map(|(x, y)| x * y)
                .collect(),
        };
        self.push(value, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias);
        assert_eq!(b.rows, 1, "bias must be a row vector");
        assert_eq!(b.cols, self.value(x).cols, "bias width");
        let mut value = self.value(x).clone();
        let bias_row = self.value(bias).row(0).to_vec();
        for r in 0..value.rows {
            for (v, b) in value.row_mut(r).iter_mut().zip(&bias_row) {
                *v += b;
            }
        }
        self.push(value, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::exp);
        self.push(value, Op::Exp(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(value, Op::Clamp(x, lo, hi))
    }

    pub fn gather_rows(&mut self, x: NodeId, indices: Vec<usize>) -> NodeId {
        let src = self.value(x);
        let mut value = Mat::zeros(indices.len(), src.cols);
        for (i, &idx) in indices.iter().enumerate() {
            value.row_mut(i).copy_from_slice(src.row(idx));
        }
        self.push(value, Op::GatherRows(x, indices))
    }

    pub fn tile_rows(&mut self, x: NodeId, times: usize) -> NodeId {
        let src = self.value(x);
        let mut value = Mat::zeros(src.rows * times, src.cols);
        for t in 0..times {
            for r in 0..src.rows {
                value
                    .row_mut(t * src.rows + r)
                    .copy_from_slice(src.row(r));
            }
        }
        self.push(value, Op::TileRows(x, times))
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let total: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut value = Mat::zeros(rows, total);
        let mut offset = 0;
        for &p in &parts {
            let src = self.value(p);
            assert_eq!(src.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.row_mut(r)[offset..offset + src.cols].copy_from_slice(src.row(r));
            }
            offset += src.cols;
        }
        self.push(value, Op::ConcatCols(parts))
    }

    pub fn interleave_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        let k = parts.len();
        let first = self.value(parts[0]);
        let (n, d) = (first.rows, first.cols);
        for &p in &parts {
            assert!(
                self.value(p).rows == n && self.value(p).cols == d,
                "interleave_rows shape mismatch"
            );
        }
        let mut value = Mat::zeros(n * k, d);
        for i in 0..n {
            for (j, &p) in parts.iter().enumerate() {
                value.row_mut(i * k + j).copy_from_slice(self.value(p).row(i));
            }
        }
        self.push(value, Op::InterleaveRows(parts))
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> NodeId {
        let src = self.value(x);
        assert_eq!(src.rows * src.cols, rows * cols, "reshape size");
        let value = Mat {
            rows,
            cols,
            data: src.data.clone(),
        };
        self.push(value, Op::Reshape(x))
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let src = self.value(x);
        let mut value = Mat::zeros(src.rows, 1);
        for r in 0..src.rows {
            value.data[r] = src.row(r).iter().sum();
        }
        self.push(value, Op::RowSum(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let src = self.value(x);
        let mean = src.data.iter().sum::<f64>() / src.data.len() as f64;
        let value = Mat::from_vec(1, 1, vec![mean]);
        self.push(value, Op::MeanAll(x))
    }

    /// Per-row cross-entropy of softmax(logits) against the target
    /// classes; output is n×1.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: Vec<usize>) -> NodeId {
        let src = self.value(logits);
        assert_eq!(src.rows, targets.len(), "one target per row");
        let mut probs = Mat::zeros(src.rows, src.cols);
        let mut value = Mat::zeros(src.rows, 1);
        for r in 0..src.rows {
            let row = src.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (p, &l) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (l - max).exp();
                sum += *p;
            }
            for p in probs.row_mut(r) {
                *p /= sum;
            }
            value.data[r] = -(probs.at(r, targets[r]).max(1e-300)).ln();
        }
        self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Softmax probabilities (forward-only helper for inference).
    pub fn softmax_rows(mat: &Mat) -> Mat {
        let mut out = Mat::zeros(mat.rows, mat.cols);
        for r in 0..mat.rows {
            let row = mat.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (p, &l) in out.row_mut(r).iter_mut().zip(row) {
                *p = (l - max).exp();
                sum += *p;
            }
            for p in out.row_mut(r) {
                *p /= sum;
            }
        }
        out
    }

    const LN_EPS: f64 = 1e-8;

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let src = self.value(x);
        let d = src.cols;
        assert_eq!(self.value(gain).cols, d, "layer_norm gain width");
        assert_eq!(self.value(bias).cols, d, "layer_norm bias width");
        let g = self.value(gain).row(0).to_vec();
        let b = self.value(bias).row(0).to_vec();
        let mut xhat = Mat::zeros(src.rows, d);
        let mut inv_std = vec![0.0; src.rows];
        let mut value = Mat::zeros(src.rows, d);
        for r in 0..src.rows {
            let row = src.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + Self::LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let xh = (row[c] - mean) * is;
                *xhat.at_mut(r, c) = xh;
                *value.at_mut(r, c) = g[c] * xh + b[c];
            }
        }
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head self-attention. `x` is (batch·seq)×d; `mask` (when
    /// present) marks valid positions — masked keys receive no attention
    /// weight. Output has the shape of `x`.
    pub fn attention(
        &mut self,
        x: NodeId,
        wq: NodeId,
        wk: NodeId,
        wv: NodeId,
        batch: usize,
        seq: usize,
        heads: usize,
        mask: Option<Vec<bool>>,
    ) -> NodeId {
        let src = self.value(x);
        let d = src.cols;
        assert_eq!(src.rows, batch * seq, "attention input rows");
        assert_eq!(d % heads, 0, "head count must divide the model width");
        if let Some(m) = &mask {
            assert_eq!(m.len(), batch * seq, "mask length");
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let q_full = src.matmul(self.value(wq));
        let k_full = src.matmul(self.value(wk));
        let v_full = src.matmul(self.value(wv));

        let mut cache = AttnCache {
            q: Vec::with_capacity(batch * heads),
            k: Vec::with_capacity(batch * heads),
            v: Vec::with_capacity(batch * heads),
            probs: Vec::with_capacity(batch * heads),
        };
        let mut value = Mat::zeros(batch * seq, d);

        for b in 0..batch {
            for h in 0..heads {
                let slice = |full: &Mat| -> Mat {
                    let mut m = Mat::zeros(seq, dh);
                    for t in 0..seq {
                        let row = full.row(b * seq + t);
                        m.row_mut(t).copy_from_slice(&row[h * dh..(h + 1) * dh]);
                    }
                    m
                };
                let q = slice(&q_full);
                let k = slice(&k_full);
                let v = slice(&v_full);

                let mut scores = q.matmul_nt(&k);
                scores.scale_assign(scale);
                if let Some(m) = &mask {
                    for ti in 0..seq {
                        for tj in 0..seq {
                            if !m[b * seq + tj] {
                                *scores.at_mut(ti, tj) = -1e30;
                            }
                        }
                    }
                }
                let probs = Self::softmax_rows(&scores);
                let ctx = probs.matmul(&v);
                for t in 0..seq {
                    value.row_mut(b * seq + t)[h * dh..(h + 1) * dh]
                        .copy_from_slice(ctx.row(t));
                }
                cache.q.push(q);
                cache.k.push(k);
                cache.v.push(v);
                cache.probs.push(probs);
            }
        }

        self.push(
            value,
            Op::Attention {
                x,
                wq,
                wk,
                wv,
                batch,
                seq,
                heads,
                cache,
            },
        )
    }

    /// GRU over `batch` blocks of `seq` rows; returns the final hidden
    /// state per block. Input weights are d×h, hidden weights h×h,
    /// biases 1×h.
    #[allow(clippy::too_many_arguments)]
    pub fn gru(
        &mut self,
        x: NodeId,
        wxz: NodeId,
        whz: NodeId,
        bz: NodeId,
        wxr: NodeId,
        whr: NodeId,
        br: NodeId,
        wxh: NodeId,
        whh: NodeId,
        bh: NodeId,
        batch: usize,
        seq: usize,
    ) -> NodeId {
        let src = self.value(x);
        assert_eq!(src.rows, batch * seq, "gru input rows");
        let hdim = self.value(whz).rows;

        let dot = |v: &[f64], w: &Mat, out: &mut [f64]| {
            for (k, &vk) in v.iter().enumerate() {
                if vk == 0.0 {
                    continue;
                }
                for (o, &wkj) in out.iter_mut().zip(w.row(k)) {
                    *o += vk * wkj;
                }
            }
        };

        let mut cache = GruCache {
            z: Vec::with_capacity(batch * seq),
            r: Vec::with_capacity(batch * seq),
            cand: Vec::with_capacity(batch * seq),
            h: Vec::with_capacity(batch * (seq + 1)),
        };
        let mut value = Mat::zeros(batch, hdim);

        for b in 0..batch {
            let mut h = vec![0.0; hdim];
            cache.h.push(h.clone());
            for t in 0..seq {
                let xt = self.nodes[x.0].value.row(b * seq + t);
                let mut az = self.nodes[bz.0].value.row(0).to_vec();
                dot(xt, &self.nodes[wxz.0].value, &mut az);
                dot(&h, &self.nodes[whz.0].value, &mut az);
                let z: Vec<f64> = az.iter().map(|&v| sigmoid(v)).collect();

                let mut ar = self.nodes[br.0].value.row(0).to_vec();
                dot(xt, &self.nodes[wxr.0].value, &mut ar);
                dot(&h, &self.nodes[whr.0].value, &mut ar);
                let r: Vec<f64> = ar.iter().map(|&v| sigmoid(v)).collect();

                let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
                let mut ac = self.nodes[bh.0].value.row(0).to_vec();
                dot(xt, &self.nodes[wxh.0].value, &mut ac);
                dot(&rh, &self.nodes[whh.0].value, &mut ac);
                let cand: Vec<f64> = ac.iter().map(|&v| v.tanh()).collect();

                let h_next: Vec<f64> = z
                    .iter()
                    .zip(&cand)
                    .zip(&h)
                    .map(|((&zi, &ci), &hi)| (1.0 - zi) * hi + zi * ci)
                    .collect();

                cache.z.push(z);
                cache.r.push(r);
                cache.cand.push(cand);
                cache.h.push(h_next.clone());
                h = h_next;
            }
            value.row_mut(b).copy_from_slice(&h);
        }

        self.push(
            value,
            Op::Gru {
                x,
                wxz,
                whz,
                bz,
                wxr,
                whr,
                br,
                wxh,
                whh,
                bh,
                batch,
                seq,
                cache,
            },
        )
    }

    fn add_to_grad(&mut self, id: NodeId, delta: &Mat) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => g.add_assign(delta),
            None => node.grad = Some(delta.clone()),
        }
    }

    /// Backpropagates from a scalar (1×1) root.
    pub fn backward(&mut self, root: NodeId) {
        {
            let node = &mut self.nodes[root.0];
            assert_eq!(
                (node.value.rows, node.value.cols),
                (1, 1),
                "backward root must be scalar"
            );
            node.grad = Some(Mat::from_vec(1, 1, vec![1.0]));
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(grad) = self.nodes[i].grad.clone() else {
                continue;
            };
            // Detach the node so its op caches can be read while other
            // nodes' gradients are updated.
            let node = std::mem::replace(
                &mut self.nodes[i],
                Node {
                    value: Mat::zeros(0, 0),
                    grad: None,
                    op: Op::Leaf,
                },
            );
            self.backprop_node(&node, &grad);
            self.nodes[i] = node;
        }
    }

    fn backprop_node(&mut self, node: &Node, grad: &Mat) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = grad.matmul_nt(&self.nodes[b.0].value);
                let db = self.nodes[a.0].value.matmul_tn(grad);
                self.add_to_grad(*a, &da);
                self.add_to_grad(*b, &db);
            }
            Op::Add(a, b) => {
                self.add_to_grad(*a, grad);
                self.add_to_grad(*b, grad);
            }
            Op::Sub(a, b) => {
                self.add_to_grad(*a, grad);
                let neg = grad.map(|v| -v);
                self.add_to_grad(*b, &neg);
            }
            Op::Mul(a, b) => {
                let da = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&self.nodes[b.0].value.data)
                        .map(|(g, v)| g * v)
                        .collect(),
                };
                let db = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&self.nodes[a.0].value.data)
                        .map(|(g, v)| g * v)
                        .collect(),
                };
                self.add_to_grad(*a, &da);
                self.add_to_grad(*b, &db);
            }
            Op::AddRow(x, bias) => {
                self.add_to_grad(*x, grad);
                let mut db = Mat::zeros(1, grad.cols);
                for r in 0..grad.rows {
                    for (d, g) in db.row_mut(0).iter_mut().zip(grad.row(r)) {
                        *d += g;
                    }
                }
                self.add_to_grad(*bias, &db);
            }
            Op::Scale(x, factor) => {
                let dx = grad.map(|v| v * factor);
                self.add_to_grad(*x, &dx);
            }
            Op::AddScalar(x) => {
                self.add_to_grad(*x, grad);
            }
            Op::Relu(x) => {
                let dx = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&self.nodes[x.0].value.data)
                        .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                        .collect(),
                };
                self.add_to_grad(*x, &dx);
            }
            Op::Tanh(x) => {
                let dx = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect(),
                };
                self.add_to_grad(*x, &dx);
            }
            Op::Exp(x) => {
                let dx = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, y)| g * y)
                        .collect(),
                };
                self.add_to_grad(*x, &dx);
            }
            Op::Clamp(x, lo, hi) => {
                let dx = Mat {
                    rows: grad.rows,
                    cols: grad.cols,
                    data: grad
                        .data
                        .iter()
                        .zip(&self.nodes[x.0].value.data)
                        .map(|(g, v)| if *v > *lo && *v < *hi { *g } else { 0.0 })
                        .collect(),
                };
                self.add_to_grad(*x, &dx);
            }
            Op::GatherRows(x, indices) => {
                let src = &self.nodes[x.0].value;
                let mut dx = Mat::zeros(src.rows, src.cols);
                for (i, &idx) in indices.iter().enumerate() {
                    for (d, g) in dx.row_mut(idx).iter_mut().zip(grad.row(i)) {
                        *d += g;
                    }
                }
                self.add_to_grad(*x, &dx);
            }
            Op::TileRows(x, times) => {
                let src_rows = self.nodes[x.0].value.rows;
                let mut dx = Mat::zeros(src_rows, grad.cols);
                for t in 0..*times {
                    for r in 0..src_rows {
                        for (d, g) in dx.row_mut(r).iter_mut().zip(grad.row(t * src_rows + r)) {
                            *d += g;
                        }
                    }
                }
                self.add_to_grad(*x, &dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.nodes[p.0].value.cols;
                    let mut dp = Mat::zeros(grad.rows, cols);
                    for r in 0..grad.rows {
                        dp.row_mut(r).copy_from_slice(&grad.row(r)[offset..offset + cols]);
                    }
                    self.add_to_grad(p, &dp);
                    offset += cols;
                }
            }
            Op::InterleaveRows(parts) => {
                let k = parts.len();
                let n = grad.rows / k;
                for (j, &p) in parts.iter().enumerate() {
                    let mut dp = Mat::zeros(n, grad.cols);
                    for i in 0..n {
                        dp.row_mut(i).copy_from_slice(grad.row(i * k + j));
                    }
                    self.add_to_grad(p, &dp);
                }
            }
            Op::Reshape(x) => {
                let src = &self.nodes[x.0].value;
                let dx = Mat {
                    rows: src.rows,
                    cols: src.cols,
                    data: grad.data.clone(),
                };
                self.add_to_grad(*x, &dx);
            }
            Op::RowSum(x) => {
                let src = &self.nodes[x.0].value;
                let mut dx = Mat::zeros(src.rows, src.cols);
                for r in 0..src.rows {
                    let g = grad.data[r];
                    for d in dx.row_mut(r) {
                        *d += g;
                    }
                }
                self.add_to_grad(*x, &dx);
            }
            Op::MeanAll(x) => {
                let src = &self.nodes[x.0].value;
                let g = grad.data[0] / (src.rows * src.cols) as f64;
                let dx = Mat {
                    rows: src.rows,
                    cols: src.cols,
                    data: vec![g; src.rows * src.cols],
                };
                self.add_to_grad(*x, &dx);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let mut dl = probs.clone();
                for r in 0..dl.rows {
                    let g = grad.data[r];
                    *dl.at_mut(r, targets[r]) -= 1.0;
                    for v in dl.row_mut(r) {
                        *v *= g;
                    }
                }
                self.add_to_grad(*logits, &dl);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = xhat.cols;
                let g_row = self.nodes[gain.0].value.row(0).to_vec();
                let mut dgain = Mat::zeros(1, d);
                let mut dbias = Mat::zeros(1, d);
                let mut dx = Mat::zeros(xhat.rows, d);
                for r in 0..xhat.rows {
                    let gr = grad.row(r);
                    let xh = xhat.row(r);
                    for c in 0..d {
                        dgain.data[c] += gr[c] * xh[c];
                        dbias.data[c] += gr[c];
                    }
                    // dxhat = grad ⊙ gain; then the centered/scaled rule.
                    let dxhat: Vec<f64> = gr.iter().zip(&g_row).map(|(g, w)| g * w).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for c in 0..d {
                        *dx.at_mut(r, c) =
                            inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
                    }
                }
                self.add_to_grad(*gain, &dgain);
                self.add_to_grad(*bias, &dbias);
                self.add_to_grad(*x, &dx);
            }
            Op::Attention {
                x,
                wq,
                wk,
                wv,
                batch,
                seq,
                heads,
                cache,
                ..
            } => {
                let d = self.nodes[x.0].value.cols;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let xv = &self.nodes[x.0].value;
                let mut dq_full = Mat::zeros(batch * seq, d);
                let mut dk_full = Mat::zeros(batch * seq, d);
                let mut dv_full = Mat::zeros(batch * seq, d);

                for b in 0..*batch {
                    for h in 0..*heads {
                        let ci = b * heads + h;
                        let q = &cache.q[ci];
                        let k = &cache.k[ci];
                        let v = &cache.v[ci];
                        let probs = &cache.probs[ci];

                        let mut dctx = Mat::zeros(*seq, dh);
                        for t in 0..*seq {
                            dctx.row_mut(t)
                                .copy_from_slice(&grad.row(b * seq + t)[h * dh..(h + 1) * dh]);
                        }
                        let dprobs = dctx.matmul_nt(v);
                        let dv = probs.matmul_tn(&dctx);
                        // Softmax backward per row.
                        let mut dscores = Mat::zeros(*seq, *seq);
                        for t in 0..*seq {
                            let p = probs.row(t);
                            let dp = dprobs.row(t);
                            let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
                            for j in 0..*seq {
                                *dscores.at_mut(t, j) = p[j] * (dp[j] - dot);
                            }
                        }
                        dscores.scale_assign(scale);
                        let dq = dscores.matmul(k);
                        let dk = dscores.matmul_tn(q);
                        for t in 0..*seq {
                            dq_full.row_mut(b * seq + t)[h * dh..(h + 1) * dh]
                                .copy_from_slice(dq.row(t));
                            dk_full.row_mut(b * seq + t)[h * dh..(h + 1) * dh]
                                .copy_from_slice(dk.row(t));
                            dv_full.row_mut(b * seq + t)[h * dh..(h + 1) * dh]
                                .copy_from_slice(dv.row(t));
                        }
                    }
                }

                let dwq = xv.matmul_tn(&dq_full);
                let dwk = xv.matmul_tn(&dk_full);
                let dwv = xv.matmul_tn(&dv_full);
                let mut dx = dq_full.matmul_nt(&self.nodes[wq.0].value);
                dx.add_assign(&dk_full.matmul_nt(&self.nodes[wk.0].value));
                dx.add_assign(&dv_full.matmul_nt(&self.nodes[wv.0].value));

                self.add_to_grad(*x, &dx);
                self.add_to_grad(*wq, &dwq);
                self.add_to_grad(*wk, &dwk);
                self.add_to_grad(*wv, &dwv);
            }
            Op::Gru {
                x,
                wxz,
                whz,
                bz,
                wxr,
                whr,
                br,
                wxh,
                whh,
                bh,
                batch,
                seq,
                cache,
            } => {
                let xv = &self.nodes[x.0].value;
                let d = xv.cols;
                let hdim = self.nodes[whz.0].value.rows;
                let mut dx = Mat::zeros(batch * seq, d);
                let mut dwxz = Mat::zeros(d, hdim);
                let mut dwhz = Mat::zeros(hdim, hdim);
                let mut dbz = Mat::zeros(1, hdim);
                let mut dwxr = Mat::zeros(d, hdim);
                let mut dwhr = Mat::zeros(hdim, hdim);
                let mut dbr = Mat::zeros(1, hdim);
                let mut dwxh = Mat::zeros(d, hdim);
                let mut dwhh = Mat::zeros(hdim, hdim);
                let mut dbh = Mat::zeros(1, hdim);

                // out[j] += v * W.row-dot: accumulates v ⊗ row products.
                let outer_add = |acc: &mut Mat, v: &[f64], g: &[f64]| {
                    for (k, &vk) in v.iter().enumerate() {
                        if vk == 0.0 {
                            continue;
                        }
                        for (a, &gj) in acc.row_mut(k).iter_mut().zip(g) {
                            *a += vk * gj;
                        }
                    }
                };
                let mat_vec_t = |w: &Mat, g: &[f64], out: &mut [f64]| {
                    // out += g @ W^T  (g is 1×h, W is k×h, out is 1×k)
                    for (k, o) in out.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (j, &gj) in g.iter().enumerate() {
                            acc += w.at(k, j) * gj;
                        }
                        *o += acc;
                    }
                };

                for b in 0..*batch {
                    let mut dh: Vec<f64> = grad.row(b).to_vec();
                    for t in (0..*seq).rev() {
                        let si = b * seq + t;
                        let z = &cache.z[si];
                        let r = &cache.r[si];
                        let cand = &cache.cand[si];
                        let h_prev = &cache.h[b * (seq + 1) + t];
                        let xt = xv.row(si);

                        let dcand: Vec<f64> = dh.iter().zip(z).map(|(g, zi)| g * zi).collect();
                        let dz: Vec<f64> = dh
                            .iter()
                            .zip(cand)
                            .zip(h_prev)
                            .map(|((g, c), hp)| g * (c - hp))
                            .collect();
                        let mut dh_prev: Vec<f64> =
                            dh.iter().zip(z).map(|(g, zi)| g * (1.0 - zi)).collect();

                        // Candidate path through tanh.
                        let dac: Vec<f64> = dcand
                            .iter()
                            .zip(cand)
                            .map(|(g, c)| g * (1.0 - c * c))
                            .collect();
                        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
                        outer_add(&mut dwxh, xt, &dac);
                        outer_add(&mut dwhh, &rh, &dac);
                        for (acc, g) in dbh.row_mut(0).iter_mut().zip(&dac) {
                            *acc += g;
                        }
                        let mut drh = vec![0.0; hdim];
                        mat_vec_t(&self.nodes[whh.0].value, &dac, &mut drh);
                        let dr: Vec<f64> = drh.iter().zip(h_prev).map(|(a, b)| a * b).collect();
                        for ((acc, a), b) in dh_prev.iter_mut().zip(&drh).zip(r) {
                            *acc += a * b;
                        }
                        mat_vec_t(&self.nodes[wxh.0].value, &dac, dx.row_mut(si));

                        // Update gate through sigmoid.
                        let daz: Vec<f64> =
                            dz.iter().zip(z).map(|(g, zi)| g * zi * (1.0 - zi)).collect();
                        outer_add(&mut dwxz, xt, &daz);
                        outer_add(&mut dwhz, h_prev, &daz);
                        for (acc, g) in dbz.row_mut(0).iter_mut().zip(&daz) {
                            *acc += g;
                        }
                        mat_vec_t(&self.nodes[whz.0].value, &daz, &mut dh_prev);
                        mat_vec_t(&self.nodes[wxz.0].value, &daz, dx.row_mut(si));

                        // Reset gate through sigmoid.
                        let dar: Vec<f64> =
                            dr.iter().zip(r).map(|(g, ri)| g * ri * (1.0 - ri)).collect();
                        outer_add(&mut dwxr, xt, &dar);
                        outer_add(&mut dwhr, h_prev, &dar);
                        for (acc, g) in dbr.row_mut(0).iter_mut().zip(&dar) {
                            *acc += g;
                        }
                        mat_vec_t(&self.nodes[whr.0].value, &dar, &mut dh_prev);
                        mat_vec_t(&self.nodes[wxr.0].value, &dar, dx.row_mut(si));

                        dh = dh_prev;
                    }
                }

                self.add_to_grad(*x, &dx);
                self.add_to_grad(*wxz, &dwxz);
                self.add_to_grad(*whz, &dwhz);
                self.add_to_grad(*bz, &dbz);
                self.add_to_grad(*wxr, &dwxr);
                self.add_to_grad(*whr, &dwhr);
                self.add_to_grad(*br, &dbr);
                self.add_to_grad(*wxh, &dwxh);
                self.add_to_grad(*whh, &dwhh);
                self.add_to_grad(*bh, &dbh);
            }
        }
    }
}
