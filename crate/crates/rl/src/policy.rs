//! Policy/value network over the macro graph.
//!
//! A stack of GAT (or GCN) layers embeds every macro. The embedding of the
//! macro being placed is concatenated with the mean-pooled graph embedding
//! and an encoding of the design metadata; a linear head turns that into
//! `W*W` logits and a small perceptron into a value estimate.

use std::sync::Arc;

use macroplace::env::{ActionMask, Backbone};
use macroplace::graph::{MacroGraph, NetlistMetadata, METADATA_LEN, NUM_FEATURES};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layers::{gat_layer, gcn_layer, GatHead, GatParams, GcnParams};
use crate::tensor::{self, Matrix, Tape, TensorError, Var, MASK_VALUE};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("no legal action")]
    AllMasked,
    #[error("macro id {0} out of range for {1} macros")]
    BadMacroId(usize, usize),
    #[error("mask has {0} entries, expected {1}")]
    MaskSize(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub meta_dim: usize,
    pub value_hidden: usize,
    pub grid_size: usize,
    /// Init scale of the policy head relative to fan-in scaling.
    pub head_gain: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Gat,
            layers: 3,
            heads: 4,
            head_dim: 16,
            meta_dim: 32,
            value_hidden: 64,
            grid_size: 32,
            head_gain: 0.01,
        }
    }
}

impl PolicyConfig {
    /// Width of a node embedding.
    pub fn hidden(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Width of the head input `[node | pooled | metadata]`.
    pub fn head_input(&self) -> usize {
        2 * self.hidden() + self.meta_dim
    }

    pub fn actions(&self) -> usize {
        self.grid_size * self.grid_size
    }

    /// Parameter names and shapes, in storage order.
    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        let h = self.hidden();
        for l in 0..self.layers {
            let d_in = if l == 0 { NUM_FEATURES } else { h };
            match self.backbone {
                Backbone::Gat => {
                    for k in 0..self.heads {
                        out.push((format!("gnn.{l}.head{k}.w"), (d_in, self.head_dim)));
                        out.push((format!("gnn.{l}.head{k}.a_src"), (self.head_dim, 1)));
                        out.push((format!("gnn.{l}.head{k}.a_dst"), (self.head_dim, 1)));
                    }
                }
                Backbone::Gcn => out.push((format!("gnn.{l}.w"), (d_in, h))),
            }
            out.push((format!("gnn.{l}.b"), (1, h)));
        }
        out.push(("meta.0.w".into(), (METADATA_LEN, self.meta_dim)));
        out.push(("meta.0.b".into(), (1, self.meta_dim)));
        out.push(("meta.1.w".into(), (self.meta_dim, self.meta_dim)));
        out.push(("meta.1.b".into(), (1, self.meta_dim)));
        out.push(("policy.w".into(), (self.head_input(), self.actions())));
        out.push(("policy.b".into(), (1, self.actions())));
        out.push(("value.0.w".into(), (self.head_input(), self.value_hidden)));
        out.push(("value.0.b".into(), (1, self.value_hidden)));
        out.push(("value.1.w".into(), (self.value_hidden, 1)));
        out.push(("value.1.b".into(), (1, 1)));
        out
    }
}

/// Named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    names: Vec<String>,
    tensors: Vec<Arc<Matrix>>,
}

impl PolicyParams {
    /// Uniform fan-in initialization `U(-g/sqrt(fan_in), g/sqrt(fan_in))`;
    /// biases start at zero.
    pub fn new(config: PolicyConfig, rng: &mut impl Rng) -> Self {
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, (r, c)) in config.shapes() {
            let m = if name.ends_with(".b") {
                Matrix::zeros(r, c)
            } else {
                let gain = if name.starts_with("policy.") { config.head_gain } else { 1.0 };
                let bound = gain / (r as f64).sqrt();
                Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-bound..=bound)).collect())
            };
            names.push(name);
            tensors.push(Arc::new(m));
        }
        Self { config, names, tensors }
    }

    /// Parameters with every entry zero.
    pub fn zeros(config: PolicyConfig) -> Self {
        let (names, tensors) = config
            .shapes()
            .into_iter()
            .map(|(n, (r, c))| (n, Arc::new(Matrix::zeros(r, c))))
            .unzip();
        Self { config, names, tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &Matrix {
        &self.tensors[i]
    }

    pub fn tensor_arc(&self, i: usize) -> Arc<Matrix> {
        self.tensors[i].clone()
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Matrix {
        Arc::make_mut(&mut self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index_of(name).map(|i| &*self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.is_finite())
    }

    /// Replace tensor `i`, keeping its shape.
    pub fn set(&mut self, i: usize, value: Matrix) -> Result<(), TensorError> {
        if value.shape() != self.tensors[i].shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "{}: got {:?}, expected {:?}",
                self.names[i],
                value.shape(),
                self.tensors[i].shape()
            )));
        }
        self.tensors[i] = Arc::new(value);
        Ok(())
    }

    /// Record every parameter as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.tensors.iter().enumerate().map(|(i, t)| tape.param(i, t.clone())).collect(),
            names: self.names.clone(),
        }
    }
}

/// Parameters recorded on a tape.
pub struct Bound<'t> {
    pub vars: Vec<Var<'t>>,
    names: Vec<String>,
}

impl<'t> Bound<'t> {
    pub fn var(&self, name: &str) -> Var<'t> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }
}

/// Design-level network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    /// `N x 4`
    pub features: Matrix,
    /// `N x N`
    pub adjacency: Matrix,
    /// `1 x 7`
    pub metadata: Matrix,
}

impl GraphInput {
    pub fn new(graph: &MacroGraph, metadata: &NetlistMetadata) -> Self {
        let (f, h) = (&graph.features, &graph.adjacency);
        Self {
            features: Matrix::from_vec(f.nrows(), f.ncols(), f.iter().copied().collect()),
            adjacency: Matrix::from_vec(h.nrows(), h.ncols(), h.iter().copied().collect()),
            metadata: Matrix::from_vec(1, metadata.0.len(), metadata.0.to_vec()),
        }
    }

    pub fn n_macros(&self) -> usize {
        self.features.rows
    }

    /// Relabel macros so that new macro `i` is old macro `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        let mut features = Matrix::zeros(n, self.features.cols);
        let mut adjacency = Matrix::zeros(n, n);
        for i in 0..n {
            features.row_mut(i).copy_from_slice(self.features.row(perm[i]));
            for j in 0..n {
                adjacency.set(i, j, self.adjacency.get(perm[i], perm[j]));
            }
        }
        Self { features, adjacency, metadata: self.metadata.clone() }
    }
}

/// Backbone outputs.
pub struct Encoding<'t> {
    /// `N x hidden`
    pub nodes: Var<'t>,
    /// `1 x (hidden + meta_dim)`: pooled embedding then metadata encoding.
    pub context: Var<'t>,
}

/// Run the graph backbone and metadata encoder.
pub fn encode<'t>(p: &Bound<'t>, config: &PolicyConfig, input: &GraphInput) -> Result<Encoding<'t>, PolicyError> {
    let tape = p.vars[0].tape();
    let mut x = tape.constant(input.features.clone());
    for l in 0..config.layers {
        x = match config.backbone {
            Backbone::Gat => {
                let heads = (0..config.heads)
                    .map(|k| GatHead {
                        w: p.var(&format!("gnn.{l}.head{k}.w")),
                        a_src: p.var(&format!("gnn.{l}.head{k}.a_src")),
                        a_dst: p.var(&format!("gnn.{l}.head{k}.a_dst")),
                    })
                    .collect();
                gat_layer(x, &input.adjacency, &GatParams { heads, bias: p.var(&format!("gnn.{l}.b")) })?
            }
            Backbone::Gcn => gcn_layer(
                x,
                &input.adjacency,
                &GcnParams { w: p.var(&format!("gnn.{l}.w")), bias: p.var(&format!("gnn.{l}.b")) },
            )?,
        };
    }
    if input.metadata.shape() != (1, METADATA_LEN) {
        return Err(TensorError::ShapeMismatch(format!("metadata {:?}", input.metadata.shape())).into());
    }
    let meta = tape
        .constant(input.metadata.clone())
        .matmul(p.var("meta.0.w"))
        .add_row(p.var("meta.0.b"))
        .elu()
        .matmul(p.var("meta.1.w"))
        .add_row(p.var("meta.1.b"))
        .elu();
    let pooled = x.mean_rows();
    Ok(Encoding { nodes: x, context: Var::concat_cols(&[pooled, meta]) })
}

/// Batched head outputs.
pub struct HeadOutput<'t> {
    /// `B x W^2`, masked entries near `-1e30`.
    pub log_probs: Var<'t>,
    /// `B x 1`
    pub values: Var<'t>,
}

/// Head inputs `[node_id | context]` for each id.
pub fn head_inputs<'t>(enc: &Encoding<'t>, macro_ids: &[usize]) -> Var<'t> {
    let nodes = enc.nodes.select_rows(macro_ids);
    Var::concat_cols(&[nodes, enc.context.repeat_rows(macro_ids.len())])
}

/// Policy and value heads for a batch of (macro id, mask) pairs. `masks`
/// is row-major `B x W^2`.
pub fn heads<'t>(p: &Bound<'t>, enc: &Encoding<'t>, macro_ids: &[usize], masks: Arc<Vec<bool>>) -> HeadOutput<'t> {
    let x = head_inputs(enc, macro_ids);
    let log_probs = x
        .matmul(p.var("policy.w"))
        .add_row(p.var("policy.b"))
        .mask_fill(masks, MASK_VALUE)
        .log_softmax_rows();
    let values = x
        .matmul(p.var("value.0.w"))
        .add_row(p.var("value.0.b"))
        .elu()
        .matmul(p.var("value.1.w"))
        .add_row(p.var("value.1.b"));
    HeadOutput { log_probs, values }
}

/// Masked action distribution and value for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub grid_size: usize,
    /// Row-major `W x W`; exactly 0 on masked cells.
    pub probs: Vec<f64>,
    /// `-inf` on masked cells.
    pub log_probs: Vec<f64>,
    pub value: f64,
}

impl PolicyOutput {
    fn from_logits(logits: &[f64], mask: &[bool], value: f64, grid_size: usize) -> Self {
        let row = Matrix::from_vec(1, logits.len(), mask.iter().zip(logits).map(|(&k, &l)| if k { l } else { MASK_VALUE }).collect());
        let lp = tensor::log_softmax_rows(&row);
        let log_probs: Vec<f64> = lp.data.iter().zip(mask).map(|(&l, &k)| if k { l } else { f64::NEG_INFINITY }).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { grid_size, probs, log_probs, value }
    }

    pub fn argmax(&self) -> usize {
        // first index among ties, for determinism
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF sample; never returns a zero-probability cell.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = self.argmax();
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().zip(&self.log_probs).filter(|(p, _)| **p > 0.0).map(|(p, l)| -p * l).sum()
    }
}

fn check_step(config: &PolicyConfig, n: usize, macro_id: usize, mask: &ActionMask) -> Result<(), PolicyError> {
    if macro_id >= n {
        return Err(PolicyError::BadMacroId(macro_id, n));
    }
    if mask.legal.len() != config.actions() {
        return Err(PolicyError::MaskSize(mask.legal.len(), config.actions()));
    }
    if !mask.any() {
        return Err(PolicyError::AllMasked);
    }
    Ok(())
}

/// Full forward pass for one state on a fresh tape.
pub fn forward(params: &PolicyParams, input: &GraphInput, macro_id: usize, mask: &ActionMask) -> Result<PolicyOutput, PolicyError> {
    check_step(&params.config, input.n_macros(), macro_id, mask)?;
    let tape = Tape::new();
    let p = params.bind(&tape);
    let enc = encode(&p, &params.config, input)?;
    let x = head_inputs(&enc, &[macro_id]);
    let logits = x.matmul(p.var("policy.w")).add_row(p.var("policy.b")).value();
    let value = x
        .matmul(p.var("value.0.w"))
        .add_row(p.var("value.0.b"))
        .elu()
        .matmul(p.var("value.1.w"))
        .add_row(p.var("value.1.b"))
        .item();
    Ok(PolicyOutput::from_logits(&logits.data, &mask.legal, value, params.config.grid_size))
}

/// Backbone output cached for a fixed parameter set, so each step only
/// evaluates the heads.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Row `i` is the head input for macro `i`.
    pub inputs: Matrix,
}

impl Prepared {
    pub fn new(params: &PolicyParams, input: &GraphInput) -> Result<Self, PolicyError> {
        let tape = Tape::new();
        let p = params.bind(&tape);
        let enc = encode(&p, &params.config, input)?;
        let ids: Vec<usize> = (0..input.n_macros()).collect();
        let inputs = (*head_inputs(&enc, &ids).value()).clone();
        Ok(Self { inputs })
    }

    pub fn step(&self, params: &PolicyParams, macro_id: usize, mask: &ActionMask) -> Result<PolicyOutput, PolicyError> {
        check_step(&params.config, self.inputs.rows, macro_id, mask)?;
        let get = |n: &str| params.get(n).expect("parameter present");
        let x = Matrix::from_vec(1, self.inputs.cols, self.inputs.row(macro_id).to_vec());
        let add_bias = |mut m: Matrix, b: &Matrix| {
            for (v, b) in m.data.iter_mut().zip(&b.data) {
                *v += b;
            }
            m
        };
        let logits = add_bias(x.matmul(get("policy.w")), get("policy.b"));
        let hidden = add_bias(x.matmul(get("value.0.w")), get("value.0.b")).map(tensor::elu);
        let value = add_bias(hidden.matmul(get("value.1.w")), get("value.1.b")).item();
        Ok(PolicyOutput::from_logits(&logits.data, &mask.legal, value, params.config.grid_size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn input(n: usize) -> GraphInput {
        let mut adjacency = Matrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            adjacency.set(i, i + 1, 1.0);
            adjacency.set(i + 1, i, 1.0);
        }
        GraphInput {
            features: Matrix::from_vec(n, 4, (0..4 * n).map(|k| (k % 5) as f64 / 4.0).collect()),
            adjacency,
            metadata: Matrix::from_vec(1, 7, vec![0.5, 0.4, 0.1, 0.0, 1.0, 0.8, 0.6]),
        }
    }

    fn small_config() -> PolicyConfig {
        PolicyConfig { layers: 2, heads: 2, head_dim: 3, meta_dim: 4, value_hidden: 5, grid_size: 4, ..Default::default() }
    }

    #[test]
    fn single_legal_cell_gets_all_mass() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParams::new(small_config(), &mut rng);
        let mut legal = vec![false; 16];
        legal[7] = true;
        let out = forward(&params, &input(3), 1, &ActionMask { grid_size: 4, legal }).unwrap();
        assert_eq!(out.probs[7], 1.0);
        assert_eq!(out.probs.iter().filter(|&&p| p != 0.0).count(), 1);
        assert_eq!(out.argmax(), 7);
    }

    #[test]
    fn zero_head_gives_uniform_distribution() {
        let mut config = small_config();
        config.head_gain = 0.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let params = PolicyParams::new(config, &mut rng);
        let out = forward(&params, &input(3), 0, &ActionMask { grid_size: 4, legal: vec![true; 16] }).unwrap();
        assert!(out.probs.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn all_masked_is_an_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let params = PolicyParams::new(small_config(), &mut rng);
        let mask = ActionMask { grid_size: 4, legal: vec![false; 16] };
        assert_eq!(forward(&params, &input(2), 0, &mask), Err(PolicyError::AllMasked));
        let full = ActionMask { grid_size: 4, legal: vec![true; 16] };
        assert_eq!(forward(&params, &input(2), 2, &full), Err(PolicyError::BadMacroId(2, 2)));
    }

    #[test]
    fn prepared_path_matches_tape_path() {
        for backbone in [Backbone::Gat, Backbone::Gcn] {
            let config = PolicyConfig { backbone, head_gain: 1.0, ..small_config() };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
            let params = PolicyParams::new(config, &mut rng);
            let inp = input(4);
            let prepared = Prepared::new(&params, &inp).unwrap();
            let legal: Vec<bool> = (0..16).map(|i| i % 3 != 0).collect();
            let mask = ActionMask { grid_size: 4, legal };
            for id in 0..4 {
                let a = forward(&params, &inp, id, &mask).unwrap();
                let b = prepared.step(&params, id, &mask).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn sampling_respects_the_mask() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = PolicyParams::new(PolicyConfig { head_gain: 1.0, ..small_config() }, &mut rng);
        let legal: Vec<bool> = (0..16).map(|i| i % 2 == 0).collect();
        let out = forward(&params, &input(3), 2, &ActionMask { grid_size: 4, legal: legal.clone() }).unwrap();
        for _ in 0..500 {
            assert!(legal[out.sample(&mut rng)]);
        }
    }
}
