//! Message-passing policy and value networks over the zone adjacency graph.
//!
//! Both networks share the same shape: a per-zone encoder followed by `L`
//! rounds of neighbourhood aggregation (each an affine map and `tanh`).
//! The policy trunk ends in a per-zone head with one logit per intervention
//! kind; the value trunk is mean-pooled over zones and passed through a
//! small MLP. Every parameter is shared across zones, so the same weights
//! run on any number of zones.
//!
//! Parameters live in one flat `Vec<f64>` described by a [`Layout`], which
//! keeps the optimiser, gradient checks and checkpoints simple.

mod checkpoint;
mod normalizer;

pub use checkpoint::{PolicyCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use normalizer::FeatureNormalizer;

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::valuation::{InterventionKind, KIND_COUNT};

/// Zone features plus the episode progress `t / T`.
pub const INPUT_DIM: usize = FEATURE_DIM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over the zone and its neighbours.
    #[default]
    Mean,
    /// Sum over the zone and its neighbours.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub layers: usize,
    pub aggregation: Aggregation,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 64,
            layers: 2,
            aggregation: Aggregation::Mean,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("policy.hidden", "must be positive"));
        }
        Ok(())
    }
}

/// Name and shape of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    offsets: Vec<usize>,
    len: usize,
}

#[derive(Debug, Clone, Copy)]
struct TrunkIds {
    enc: (usize, usize),
    first_layer: usize,
}

impl Layout {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let h = cfg.hidden;
        let mut tensors = Vec::new();
        let mut push = |name: String, rows, cols| tensors.push(TensorSpec { name, rows, cols });
        for trunk in ["policy", "value"] {
            push(format!("{trunk}.encoder.weight"), INPUT_DIM, h);
            push(format!("{trunk}.encoder.bias"), 1, h);
            for l in 0..cfg.layers {
                push(format!("{trunk}.layer{l}.weight"), h, h);
                push(format!("{trunk}.layer{l}.bias"), 1, h);
            }
        }
        push("policy.head.weight".into(), h, KIND_COUNT);
        push("policy.head.bias".into(), 1, KIND_COUNT);
        push("value.hidden.weight".into(), h, h);
        push("value.hidden.bias".into(), 1, h);
        push("value.out.weight".into(), h, 1);
        push("value.out.bias".into(), 1, 1);
        let mut offsets = Vec::with_capacity(tensors.len());
        let mut len = 0;
        for t in &tensors {
            offsets.push(len);
            len += t.rows * t.cols;
        }
        Layout { tensors, offsets, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, id: usize) -> Range<usize> {
        let t = &self.tensors[id];
        self.offsets[id]..self.offsets[id] + t.rows * t.cols
    }

    /// Name of the tensor holding flat index `i`.
    pub fn tensor_of(&self, i: usize) -> &str {
        let id = self.offsets.partition_point(|&o| o <= i) - 1;
        &self.tensors[id].name
    }
}

/// Batch of graphs stacked row-wise: one row per zone.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    /// Normalised inputs, `rows × INPUT_DIM`.
    pub x: Array2<f64>,
    /// Rows aggregated into each row (itself first, then neighbours).
    pub neighbours: Vec<Vec<usize>>,
    pub graphs: Vec<Range<usize>>,
    pub masks: Vec<[bool; KIND_COUNT]>,
}

impl GraphBatch {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn graph_count(&self) -> usize {
        self.graphs.len()
    }

    /// Appends one graph given its normalised inputs, adjacency and masks.
    pub fn push(&mut self, x: &Array2<f64>, adjacency: &[(usize, usize)], masks: &[[bool; KIND_COUNT]]) -> Result<()> {
        let n = x.nrows();
        if x.ncols() != INPUT_DIM {
            return Err(Error::Shape(format!(
                "expected {INPUT_DIM} input features, got {}",
                x.ncols()
            )));
        }
        if masks.len() != n {
            return Err(Error::Shape(format!("{} masks for {n} zones", masks.len())));
        }
        let base = self.rows();
        let mut nb: Vec<Vec<usize>> = (0..n).map(|i| vec![base + i]).collect();
        for &(a, b) in adjacency {
            if a >= n || b >= n {
                return Err(Error::Shape(format!("adjacency ({a}, {b}) outside {n} zones")));
            }
            if a != b {
                nb[a].push(base + b);
                nb[b].push(base + a);
            }
        }
        let mut stacked = Array2::zeros((base + n, INPUT_DIM));
        stacked.slice_mut(ndarray::s![..base, ..]).assign(&self.x);
        stacked.slice_mut(ndarray::s![base.., ..]).assign(x);
        self.x = stacked;
        self.neighbours.extend(nb);
        self.graphs.push(base..base + n);
        self.masks.extend_from_slice(masks);
        Ok(())
    }

    pub fn empty() -> Self {
        GraphBatch {
            x: Array2::zeros((0, INPUT_DIM)),
            neighbours: Vec::new(),
            graphs: Vec::new(),
            masks: Vec::new(),
        }
    }

    /// Concatenates several batches, preserving order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a GraphBatch>) -> Self {
        let parts: Vec<&GraphBatch> = parts.into_iter().collect();
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let mut x = Array2::zeros((rows, INPUT_DIM));
        let mut neighbours = Vec::with_capacity(rows);
        let mut graphs = Vec::new();
        let mut masks = Vec::with_capacity(rows);
        let mut base = 0;
        for p in parts {
            x.slice_mut(ndarray::s![base..base + p.rows(), ..]).assign(&p.x);
            neighbours.extend(
                p.neighbours
                    .iter()
                    .map(|nb| nb.iter().map(|j| j + base).collect::<Vec<_>>()),
            );
            graphs.extend(p.graphs.iter().map(|g| g.start + base..g.end + base));
            masks.extend_from_slice(&p.masks);
            base += p.rows();
        }
        GraphBatch {
            x,
            neighbours,
            graphs,
            masks,
        }
    }
}

/// Raw (unmasked) logits per zone and the state value per graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

struct TrunkCache {
    /// `hs[0]` is the encoder output, `hs[l + 1]` the output of layer `l`.
    hs: Vec<Array2<f64>>,
    /// Aggregated input of each layer.
    ms: Vec<Array2<f64>>,
}

struct Cache {
    policy: TrunkCache,
    value: TrunkCache,
    pooled: Array2<f64>,
    value_hidden: Array2<f64>,
}

/// Masked softmax probabilities over one zone's kinds. Masked kinds get
/// exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool; KIND_COUNT]) -> [f64; KIND_COUNT] {
    let logp = masked_log_softmax(logits, mask);
    logp.map(|l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
}

/// Masked log-softmax; masked kinds get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool; KIND_COUNT]) -> [f64; KIND_COUNT] {
    let max = (0..KIND_COUNT)
        .filter(|&k| mask[k])
        .map(|k| logits[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..KIND_COUNT)
        .filter(|&k| mask[k])
        .map(|k| (logits[k] - max).exp())
        .sum();
    let lse = max + sum.ln();
    std::array::from_fn(|k| if mask[k] { logits[k] - lse } else { f64::NEG_INFINITY })
}

/// Entropy of a masked distribution from its log-probabilities.
pub fn entropy(logp: &[f64; KIND_COUNT]) -> f64 {
    -logp.iter().filter(|l| l.is_finite()).map(|&l| l.exp() * l).sum::<f64>()
}

/// Per-zone distributions for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<[f64; KIND_COUNT]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub actions: Vec<InterventionKind>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

impl Act {
    /// Log-probability of the joint action.
    pub fn joint_log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

/// Coefficients of the clipped-surrogate objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_range: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// One minibatch of transitions for the PPO objective.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub graphs: GraphBatch,
    /// Chosen kind index per row.
    pub actions: Vec<usize>,
    /// Joint log-probability under the behaviour policy, per graph.
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean over graphs of the summed per-zone entropy.
    pub entropy: f64,
    /// Mean of `(r - 1) - ln r`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub values: Vec<f64>,
    pub normalizer: FeatureNormalizer,
    layout: Layout,
}

impl PolicyParams {
    pub fn zeros(config: PolicyConfig) -> Self {
        let layout = Layout::new(&config);
        PolicyParams {
            config,
            values: vec![0.0; layout.len()],
            normalizer: FeatureNormalizer::new(),
            layout,
        }
    }

    /// Glorot-uniform weights, zero biases, small policy head.
    pub fn init<R: Rng + ?Sized>(config: PolicyConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        let layout = p.layout().clone();
        for (id, t) in layout.tensors.iter().enumerate() {
            if t.name.ends_with("bias") {
                continue;
            }
            let gain = if t.name == "policy.head.weight" { 0.01 } else { 1.0 };
            let a = gain * (6.0 / (t.rows + t.cols) as f64).sqrt();
            for v in &mut p.values[layout.range(id)] {
                *v = rng.gen_range(-a..a);
            }
        }
        p
    }

    pub fn from_parts(config: PolicyConfig, values: Vec<f64>, normalizer: FeatureNormalizer) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if values.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} parameter values for a layout of {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(PolicyParams {
            config,
            values,
            normalizer,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn ids(&self, trunk: usize) -> TrunkIds {
        let per_trunk = 2 + 2 * self.config.layers;
        let base = trunk * per_trunk;
        TrunkIds {
            enc: (base, base + 1),
            first_layer: base + 2,
        }
    }

    fn head_id(&self) -> usize {
        2 * (2 + 2 * self.config.layers)
    }

    fn view(&self, id: usize) -> ArrayView2<'_, f64> {
        let layout = self.layout();
        let t = &layout.tensors[id];
        ArrayView2::from_shape((t.rows, t.cols), &self.values[layout.range(id)]).expect("layout shape")
    }

    /// Normalised input rows for a state.
    pub fn inputs(&self, state: &EnvState) -> Array2<f64> {
        let n = state.zone_count();
        let progress = state.step as f64 / state.horizon.max(1) as f64;
        let mut x = Array2::zeros((n, INPUT_DIM));
        for (i, f) in state.features.iter().enumerate() {
            let row = self.normalizer.normalize(f);
            for (j, v) in row.iter().enumerate() {
                x[[i, j]] = *v;
            }
            x[[i, FEATURE_DIM]] = progress;
        }
        x
    }

    pub fn batch_of(&self, states: &[&EnvState]) -> Result<GraphBatch> {
        let mut b = GraphBatch::empty();
        for s in states {
            b.push(&self.inputs(s), &s.adjacency, &s.masks)?;
        }
        Ok(b)
    }

    fn aggregate(&self, h: &Array2<f64>, neighbours: &[Vec<usize>]) -> Array2<f64> {
        let mut m = Array2::zeros(h.raw_dim());
        for (i, nb) in neighbours.iter().enumerate() {
            let w = match self.config.aggregation {
                Aggregation::Mean => 1.0 / nb.len() as f64,
                Aggregation::Sum => 1.0,
            };
            let mut row = m.row_mut(i);
            for &j in nb {
                row.scaled_add(w, &h.row(j));
            }
        }
        m
    }

    fn aggregate_back(&self, dm: &Array2<f64>, neighbours: &[Vec<usize>]) -> Array2<f64> {
        let mut dh = Array2::zeros(dm.raw_dim());
        for (i, nb) in neighbours.iter().enumerate() {
            let w = match self.config.aggregation {
                Aggregation::Mean => 1.0 / nb.len() as f64,
                Aggregation::Sum => 1.0,
            };
            for &j in nb {
                dh.row_mut(j).scaled_add(w, &dm.row(i));
            }
        }
        dh
    }

    fn affine_tanh(&self, x: &ArrayView2<f64>, w: usize, b: usize) -> Array2<f64> {
        let mut z = x.dot(&self.view(w));
        z += &self.view(b);
        z.mapv_inplace(f64::tanh);
        z
    }

    fn trunk(&self, trunk: usize, batch: &GraphBatch) -> TrunkCache {
        let ids = self.ids(trunk);
        let mut hs = vec![self.affine_tanh(&batch.x.view(), ids.enc.0, ids.enc.1)];
        let mut ms = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let m = self.aggregate(hs.last().expect("encoder output"), &batch.neighbours);
            let w = ids.first_layer + 2 * l;
            hs.push(self.affine_tanh(&m.view(), w, w + 1));
            ms.push(m);
        }
        TrunkCache { hs, ms }
    }

    fn forward_cached(&self, batch: &GraphBatch) -> (ForwardOutput, Cache) {
        let policy = self.trunk(0, batch);
        let value = self.trunk(1, batch);
        let head = self.head_id();
        let mut logits = policy.hs.last().expect("trunk output").dot(&self.view(head));
        logits += &self.view(head + 1);

        let hv = value.hs.last().expect("trunk output");
        let mut pooled = Array2::zeros((batch.graph_count(), self.config.hidden));
        for (g, r) in batch.graphs.iter().enumerate() {
            let rows = hv.slice(ndarray::s![r.clone(), ..]);
            pooled
                .row_mut(g)
                .assign(&rows.mean_axis(Axis(0)).expect("non-empty graph"));
        }
        let value_hidden = self.affine_tanh(&pooled.view(), head + 2, head + 3);
        let mut values = value_hidden.dot(&self.view(head + 4)).column(0).to_owned();
        values += self.view(head + 5)[[0, 0]];
        (
            ForwardOutput { logits, values },
            Cache {
                policy,
                value,
                pooled,
                value_hidden,
            },
        )
    }

    pub fn forward_batch(&self, batch: &GraphBatch) -> ForwardOutput {
        self.forward_cached(batch).0
    }

    /// Logits per zone (`zones × 8`) and the state value.
    pub fn forward(&self, state: &EnvState) -> Result<(Array2<f64>, f64)> {
        let out = self.forward_batch(&self.batch_of(&[state])?);
        Ok((out.logits, out.values[0]))
    }

    pub fn distribution(&self, state: &EnvState) -> Result<ActionDistribution> {
        let (logits, _) = self.forward(state)?;
        Ok(ActionDistribution {
            probs: logits
                .outer_iter()
                .zip(&state.masks)
                .map(|(l, m)| masked_softmax(l.as_slice().expect("contiguous row"), m))
                .collect(),
        })
    }

    /// Samples (or takes the most likely) kind per zone.
    pub fn act<R: Rng + ?Sized>(&self, state: &EnvState, rng: &mut R, deterministic: bool) -> Result<Act> {
        let (logits, value) = self.forward(state)?;
        let mut actions = Vec::with_capacity(state.zone_count());
        let mut log_probs = Vec::with_capacity(state.zone_count());
        for (l, m) in logits.outer_iter().zip(&state.masks) {
            let logp = masked_log_softmax(l.as_slice().expect("contiguous row"), m);
            let k = if deterministic {
                argmax(&logp)
            } else {
                sample_index(&logp, rng)
            };
            actions.push(InterventionKind::ALL[k]);
            log_probs.push(logp[k]);
        }
        Ok(Act {
            actions,
            log_probs,
            value,
        })
    }

    /// Clipped-surrogate loss and its gradient with respect to every parameter.
    pub fn ppo_loss_and_grad(&self, batch: &PpoBatch, coef: &LossCoefficients) -> (LossStats, Vec<f64>) {
        let (out, cache) = self.forward_cached(&batch.graphs);
        let g_count = batch.graphs.graph_count();
        let inv_b = 1.0 / g_count as f64;
        let mut stats = LossStats::default();
        let mut dlogits = Array2::zeros(out.logits.raw_dim());
        let mut dvalues = Array1::zeros(g_count);

        for (g, rows) in batch.graphs.graphs.iter().enumerate() {
            let mut logp_new = 0.0;
            let mut ent = 0.0;
            let mut zone_logp = Vec::with_capacity(rows.len());
            for r in rows.clone() {
                let lp = masked_log_softmax(
                    out.logits.row(r).as_slice().expect("contiguous row"),
                    &batch.graphs.masks[r],
                );
                logp_new += lp[batch.actions[r]];
                ent += entropy(&lp);
                zone_logp.push(lp);
            }
            let ratio = (logp_new - batch.old_log_prob[g]).exp();
            let adv = batch.advantages[g];
            let clipped = ratio.clamp(1.0 - coef.clip_range, 1.0 + coef.clip_range);
            let unclipped_obj = ratio * adv;
            let clipped_obj = clipped * adv;
            stats.policy_loss -= unclipped_obj.min(clipped_obj) * inv_b;
            if (ratio - 1.0).abs() > coef.clip_range {
                stats.clip_fraction += inv_b;
            }
            stats.approx_kl += ((ratio - 1.0) - ratio.ln()) * inv_b;
            stats.entropy += ent * inv_b;
            let dv = out.values[g] - batch.returns[g];
            stats.value_loss += dv * dv * inv_b;
            dvalues[g] = coef.value_coef * 2.0 * dv * inv_b;

            // d loss / d logp_new for the joint action
            let dlogp = if unclipped_obj <= clipped_obj {
                -adv * ratio * inv_b
            } else {
                0.0
            };
            for (lp, r) in zone_logp.iter().zip(rows.clone()) {
                let h = entropy(lp);
                for k in 0..KIND_COUNT {
                    if !batch.graphs.masks[r][k] {
                        continue;
                    }
                    let p = lp[k].exp();
                    let onehot = if k == batch.actions[r] { 1.0 } else { 0.0 };
                    dlogits[[r, k]] = dlogp * (onehot - p) + coef.entropy_coef * inv_b * p * (lp[k] + h);
                }
            }
        }
        stats.loss = stats.policy_loss + coef.value_coef * stats.value_loss - coef.entropy_coef * stats.entropy;
        let grad = self.backward(&batch.graphs, &cache, &dlogits, &dvalues);
        (stats, grad)
    }

    /// Vanilla policy-gradient estimate `-mean_b A_b ∇ log π(a_b | s_b)`.
    pub fn policy_gradient(&self, batch: &PpoBatch) -> Vec<f64> {
        let (out, cache) = self.forward_cached(&batch.graphs);
        let inv_b = 1.0 / batch.graphs.graph_count() as f64;
        let mut dlogits = Array2::zeros(out.logits.raw_dim());
        for (g, rows) in batch.graphs.graphs.iter().enumerate() {
            let w = -batch.advantages[g] * inv_b;
            for r in rows.clone() {
                let p = masked_softmax(
                    out.logits.row(r).as_slice().expect("contiguous row"),
                    &batch.graphs.masks[r],
                );
                for k in 0..KIND_COUNT {
                    let onehot = if k == batch.actions[r] { 1.0 } else { 0.0 };
                    if batch.graphs.masks[r][k] {
                        dlogits[[r, k]] = w * (onehot - p[k]);
                    }
                }
            }
        }
        let dvalues = Array1::zeros(batch.graphs.graph_count());
        self.backward(&batch.graphs, &cache, &dlogits, &dvalues)
    }

    fn backward(&self, batch: &GraphBatch, cache: &Cache, dlogits: &Array2<f64>, dvalues: &Array1<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.values.len()];
        let head = self.head_id();

        // policy head
        let hp = cache.policy.hs.last().expect("trunk output");
        self.acc_weight(&mut grad, head, hp, dlogits);
        self.acc_bias(&mut grad, head + 1, dlogits);
        let dhp = dlogits.dot(&self.view(head).t());
        self.trunk_back(&mut grad, 0, batch, &cache.policy, dhp);

        // value head
        let dv2 = dvalues.view().insert_axis(Axis(1)).to_owned();
        self.acc_weight(&mut grad, head + 4, &cache.value_hidden, &dv2);
        grad[self.layout().range(head + 5).start] += dvalues.sum();
        let du = dv2.dot(&self.view(head + 4).t()) * cache.value_hidden.mapv(|u| 1.0 - u * u);
        self.acc_weight(&mut grad, head + 2, &cache.pooled, &du);
        self.acc_bias(&mut grad, head + 3, &du);
        let dpooled = du.dot(&self.view(head + 2).t());
        let mut dhv = Array2::zeros((batch.rows(), self.config.hidden));
        for (g, r) in batch.graphs.iter().enumerate() {
            let inv = 1.0 / r.len() as f64;
            for i in r.clone() {
                dhv.row_mut(i).scaled_add(inv, &dpooled.row(g));
            }
        }
        self.trunk_back(&mut grad, 1, batch, &cache.value, dhv);
        grad
    }

    fn trunk_back(&self, grad: &mut [f64], trunk: usize, batch: &GraphBatch, cache: &TrunkCache, mut dh: Array2<f64>) {
        let ids = self.ids(trunk);
        for l in (0..self.config.layers).rev() {
            let w = ids.first_layer + 2 * l;
            let dz = dh * cache.hs[l + 1].mapv(|h| 1.0 - h * h);
            self.acc_weight(grad, w, &cache.ms[l], &dz);
            self.acc_bias(grad, w + 1, &dz);
            let dm = dz.dot(&self.view(w).t());
            dh = self.aggregate_back(&dm, &batch.neighbours);
        }
        let dz = dh * cache.hs[0].mapv(|h| 1.0 - h * h);
        self.acc_weight(grad, ids.enc.0, &batch.x, &dz);
        self.acc_bias(grad, ids.enc.1, &dz);
    }

    fn acc_weight(&self, grad: &mut [f64], id: usize, input: &Array2<f64>, dz: &Array2<f64>) {
        let layout = self.layout();
        let t = &layout.tensors[id];
        let mut g = ArrayViewMut2::from_shape((t.rows, t.cols), &mut grad[layout.range(id)]).expect("layout shape");
        general_mat_mul(1.0, &input.t(), dz, 1.0, &mut g);
    }

    fn acc_bias(&self, grad: &mut [f64], id: usize, dz: &Array2<f64>) {
        let r = self.layout().range(id);
        for (g, s) in grad[r].iter_mut().zip(dz.sum_axis(Axis(0))) {
            *g += s;
        }
    }
}

fn argmax(logp: &[f64; KIND_COUNT]) -> usize {
    let mut best = 0;
    for k in 1..KIND_COUNT {
        if logp[k] > logp[best] {
            best = k;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(logp: &[f64; KIND_COUNT], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, l) in logp.iter().enumerate() {
        if !l.is_finite() {
            continue;
        }
        acc += l.exp();
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}
