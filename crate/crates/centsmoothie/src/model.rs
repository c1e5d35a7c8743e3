//! The spectral-convolution model: input transforms, stacked propagation
//! layers, and triple scoring.
//!
//! Drugs enter through a two-layer feedforward map of their feature
//! vectors; side effects enter through an embedding table (a one-layer map
//! of their implicit one-hot vectors). Each convolution layer propagates
//! every embedding dimension `k` with its own operator `P_k`, mixes the
//! dimensions with a square matrix, and applies a ReLU.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergraph::{DdiHypergraph, Triple};
use crate::laplacian::{
    baseline_smoothing_laplacian, CentralCoeffs, SideEffectWeights, DEGREE_EPS,
};
use crate::sparse::CsrPattern;

/// Which Laplacian drives propagation and whether side-effect weights are
/// learnt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Weighted central-smoothing Laplacians, one per dimension, rebuilt
    /// from the learnt side-effect weights.
    CentSmoothie,
    /// Central-smoothing Laplacian with all side-effect weights fixed to
    /// one; shared across dimensions.
    CentSimple,
    /// Plain-smoothing clique-expansion Laplacian with unit weights.
    Baseline,
}

impl Method {
    /// True iff the side-effect weight matrix is a trainable parameter.
    pub fn learns_weights(self) -> bool {
        matches!(self, Method::CentSmoothie)
    }

    pub const ALL: [Method; 3] = [Method::CentSmoothie, Method::CentSimple, Method::Baseline];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::CentSmoothie => "centsmoothie",
            Method::CentSimple => "centsimple",
            Method::Baseline => "baseline",
        };
        f.write_str(name)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "centsmoothie" => Ok(Method::CentSmoothie),
            "centsimple" => Ok(Method::CentSimple),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected centsmoothie, centsimple or baseline)"
            ))),
        }
    }
}

/// All trainable parameter groups.
///
/// Shapes: the drug transform maps `K_0 -> K -> K` (hidden width equals the
/// embedding size); the side-effect embedding table is `|V_S| x K`; one
/// `K x K` mixer per layer; the side-effect weight matrix is `K x |V_S|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub num_side_effects: usize,
    /// `K_0 x K`, row-major by input feature.
    pub drug_hidden_weight: Vec<f64>,
    pub drug_hidden_bias: Vec<f64>,
    /// `K x K`, row-major by input dimension.
    pub drug_out_weight: Vec<f64>,
    pub drug_out_bias: Vec<f64>,
    /// `|V_S| x K`, row per side effect.
    pub se_embedding: Vec<f64>,
    /// One `K x K` mixer per layer, row-major by input dimension.
    pub layer_mixers: Vec<Vec<f64>>,
    /// Non-negative side-effect weights shared by all layers.
    pub weights: SideEffectWeights,
}

impl ModelParams {
    /// Seeded initialization: uniform `[-1/sqrt(K), 1/sqrt(K)]` for every
    /// affine map and the embedding table; all-ones weights, so the initial
    /// model coincides with the non-weighted variant.
    pub fn init(
        feature_dim: usize,
        num_side_effects: usize,
        embedding_dim: usize,
        num_layers: usize,
        seed: u64,
    ) -> ModelParams {
        assert!(num_layers >= 1, "layer count must be at least 1");
        let k = embedding_dim;
        let bound = 1.0 / (k as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        ModelParams {
            feature_dim,
            embedding_dim: k,
            num_side_effects,
            drug_hidden_weight: draw(feature_dim * k),
            drug_hidden_bias: draw(k),
            drug_out_weight: draw(k * k),
            drug_out_bias: draw(k),
            se_embedding: draw(num_side_effects * k),
            layer_mixers: (0..num_layers).map(|_| draw(k * k)).collect(),
            weights: SideEffectWeights::ones(k, num_side_effects),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_mixers.len()
    }
}

/// Dense `K x |V|` node embedding; one contiguous `K`-vector per node in
/// flat index order (drugs first, then side effects).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding {
    num_dims: usize,
    num_nodes: usize,
    data: Vec<f64>,
}

impl NodeEmbedding {
    pub(crate) fn from_parts(num_dims: usize, num_nodes: usize, data: Vec<f64>) -> NodeEmbedding {
        debug_assert_eq!(data.len(), num_dims * num_nodes);
        NodeEmbedding {
            num_dims,
            num_nodes,
            data,
        }
    }

    pub fn num_dims(&self) -> usize {
        self.num_dims
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn get(&self, k: usize, node: usize) -> f64 {
        self.data[node * self.num_dims + k]
    }

    /// The embedding column of one node.
    pub fn column(&self, node: usize) -> &[f64] {
        &self.data[node * self.num_dims..(node + 1) * self.num_dims]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The per-dimension propagation operators `P_k` together with every
/// intermediate needed to differentiate through their construction.
///
/// Value arrays are slot-major: entry `(slot, k)` lives at
/// `slot * vals_per_slot + k`. Methods whose Laplacian does not depend on
/// the dimension store one value per slot (`vals_per_slot == 1`).
#[derive(Debug, Clone)]
pub struct Operators {
    pub(crate) pattern: Arc<CsrPattern>,
    pub(crate) coeffs: Option<CentralCoeffs>,
    pub(crate) num_dims: usize,
    pub(crate) vals_per_slot: usize,
    pub(crate) eps: f64,
    /// Laplacian values per slot.
    pub(crate) lap: Vec<f64>,
    /// `1/sqrt(max(L_ii, eps))`, node-major.
    pub(crate) inv_sqrt_deg: Vec<f64>,
    /// Normalized adjacency values per slot (diagonal exactly 1).
    pub(crate) atil: Vec<f64>,
    /// `1/sqrt(max(sum_j |A_ij|, eps))`, node-major.
    pub(crate) inv_sqrt_dtil: Vec<f64>,
    /// Propagation operator values per slot.
    pub(crate) prop: Vec<f64>,
    /// Slot of each diagonal entry.
    pub(crate) diag_slots: Vec<usize>,
}

impl Operators {
    /// Build the operators for a graph and method. For the weighted method
    /// the Laplacian values come from `weights`; the structure is shared by
    /// all dimensions and all rebuilds.
    pub fn build(
        g: &DdiHypergraph,
        method: Method,
        weights: &SideEffectWeights,
        num_dims: usize,
    ) -> Result<Operators> {
        let coeffs = CentralCoeffs::build(g);
        let pattern = coeffs.pattern().clone();
        let nv = pattern.dim;
        let diag_slots: Vec<usize> = (0..nv)
            .map(|i| pattern.slot(i, i).expect("diagonal slot always present"))
            .collect();
        let vals_per_slot = if method.learns_weights() { num_dims } else { 1 };
        let lap = match method {
            Method::CentSmoothie => {
                if weights.num_side_effects() != g.num_side_effects()
                    || weights.num_dims() != num_dims
                {
                    return Err(Error::DimensionMismatch {
                        context: "side-effect weight matrix",
                        expected: num_dims * g.num_side_effects(),
                        got: weights.num_dims() * weights.num_side_effects(),
                    });
                }
                let mut lap = vec![0.0; pattern.nnz() * num_dims];
                let w_tmajor = to_t_major(weights);
                coeffs.values_all(&w_tmajor, num_dims, &mut lap);
                lap
            }
            Method::CentSimple => {
                let mut lap = vec![0.0; pattern.nnz()];
                coeffs.values(&vec![1.0; g.num_side_effects()], &mut lap);
                lap
            }
            Method::Baseline => {
                let sym = baseline_smoothing_laplacian(g);
                let mut lap = vec![0.0; pattern.nnz()];
                for &(i, j, w) in sym.entries() {
                    let (i, j) = (i as usize, j as usize);
                    lap[pattern.slot(i, j).expect("baseline entry within pattern")] = w;
                    if i != j {
                        lap[pattern.slot(j, i).expect("baseline entry within pattern")] = w;
                    }
                }
                lap
            }
        };
        let mut ops = Operators {
            pattern,
            coeffs: method.learns_weights().then_some(coeffs),
            num_dims,
            vals_per_slot,
            eps: DEGREE_EPS,
            lap,
            inv_sqrt_deg: Vec::new(),
            atil: Vec::new(),
            inv_sqrt_dtil: Vec::new(),
            prop: Vec::new(),
            diag_slots,
        };
        ops.normalize();
        Ok(ops)
    }

    /// Recompute Laplacian values from updated weights and re-normalize.
    /// Only meaningful for the weighted method.
    pub(crate) fn refresh(&mut self, weights: &SideEffectWeights) {
        let coeffs = self
            .coeffs
            .as_ref()
            .expect("refresh requires a weighted Laplacian");
        let w_tmajor = to_t_major(weights);
        coeffs.values_all(&w_tmajor, self.num_dims, &mut self.lap);
        self.normalize();
    }

    /// From Laplacian values: floored degrees, normalized adjacency with
    /// unit self-loops, absolute-row-sum degrees, propagation operator.
    fn normalize(&mut self) {
        let nv = self.pattern.dim;
        let vps = self.vals_per_slot;
        let eps = self.eps;
        self.inv_sqrt_deg.resize(nv * vps, 0.0);
        self.atil.resize(self.lap.len(), 0.0);
        self.inv_sqrt_dtil.resize(nv * vps, 0.0);
        self.prop.resize(self.lap.len(), 0.0);

        for i in 0..nv {
            let base = self.diag_slots[i] * vps;
            for k in 0..vps {
                self.inv_sqrt_deg[i * vps + k] = 1.0 / self.lap[base + k].max(eps).sqrt();
            }
        }
        // Normalized adjacency: diagonal pinned to 1, off-diagonals scaled
        // by inverse square-root degrees and negated.
        for i in 0..nv {
            for s in self.pattern.row(i) {
                let j = self.pattern.col_idx[s] as usize;
                let base = s * vps;
                if i == j {
                    for k in 0..vps {
                        self.atil[base + k] = 1.0;
                    }
                } else {
                    for k in 0..vps {
                        self.atil[base + k] = -self.lap[base + k]
                            * self.inv_sqrt_deg[i * vps + k]
                            * self.inv_sqrt_deg[j * vps + k];
                    }
                }
            }
        }
        // Absolute row sums of the adjacency.
        let mut row_sum = vec![0.0f64; vps];
        for i in 0..nv {
            row_sum.iter_mut().for_each(|v| *v = 0.0);
            for s in self.pattern.row(i) {
                let base = s * vps;
                for (k, acc) in row_sum.iter_mut().enumerate() {
                    *acc += self.atil[base + k].abs();
                }
            }
            for k in 0..vps {
                self.inv_sqrt_dtil[i * vps + k] = 1.0 / row_sum[k].max(eps).sqrt();
            }
        }
        for i in 0..nv {
            for s in self.pattern.row(i) {
                let j = self.pattern.col_idx[s] as usize;
                let base = s * vps;
                for k in 0..vps {
                    self.prop[base + k] = self.atil[base + k]
                        * self.inv_sqrt_dtil[i * vps + k]
                        * self.inv_sqrt_dtil[j * vps + k];
                }
            }
        }
    }

    /// `y_k = P_k x_k` for all dimensions at once; `x` and `y` are
    /// node-major `|V| x K`.
    pub(crate) fn propagate(&self, x: &[f64], y: &mut [f64], k: usize) {
        propagate_all(&self.pattern, &self.prop, self.vals_per_slot, k, x, y);
    }
}

pub(crate) fn to_t_major(weights: &SideEffectWeights) -> Vec<f64> {
    let (kd, ns) = (weights.num_dims(), weights.num_side_effects());
    let mut out = vec![0.0; kd * ns];
    for k in 0..kd {
        for t in 0..ns {
            out[t * kd + k] = weights.get(k, t);
        }
    }
    out
}

/// Multi-dimension sparse propagation: for every node `i`,
/// `y[i][k] = sum_j P_k[i][j] x[j][k]`.
pub(crate) fn propagate_all(
    pattern: &CsrPattern,
    vals: &[f64],
    vals_per_slot: usize,
    k: usize,
    x: &[f64],
    y: &mut [f64],
) {
    debug_assert_eq!(x.len(), pattern.dim * k);
    debug_assert_eq!(y.len(), pattern.dim * k);
    let mut acc = vec![0.0f64; k];
    for i in 0..pattern.dim {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for s in pattern.row(i) {
            let j = pattern.col_idx[s] as usize;
            let xj = &x[j * k..(j + 1) * k];
            if vals_per_slot == 1 {
                let w = vals[s];
                for (a, &xv) in acc.iter_mut().zip(xj) {
                    *a += w * xv;
                }
            } else {
                let pv = &vals[s * k..(s + 1) * k];
                for ((a, &w), &xv) in acc.iter_mut().zip(pv).zip(xj) {
                    *a += w * xv;
                }
            }
        }
        y[i * k..(i + 1) * k].copy_from_slice(&acc);
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug)]
pub(crate) struct ForwardTrace {
    /// Post-ReLU hidden activations of the drug transform, `|V_D| x K`.
    pub drug_hidden: Vec<f64>,
    /// `X^(0)`: transformed inputs, node-major.
    pub x0: Vec<f64>,
    /// Per layer: propagated (pre-mix) values and post-ReLU outputs.
    pub ytilde: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub(crate) fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.x0
        } else {
            &self.outputs[l - 1]
        }
    }

    pub(crate) fn final_output(&self) -> &[f64] {
        self.outputs.last().unwrap_or(&self.x0)
    }
}

fn check_finite(data: &[f64], context: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

/// Transform drug features and side-effect one-hots into the shared latent
/// space: drugs through the ReLU two-layer map, side effects through the
/// embedding table.
pub fn input_transform(params: &ModelParams, g: &DdiHypergraph) -> Result<NodeEmbedding> {
    let (x0, _) = input_transform_raw(params, g)?;
    Ok(NodeEmbedding::from_parts(
        params.embedding_dim,
        g.num_nodes(),
        x0,
    ))
}

fn input_transform_raw(params: &ModelParams, g: &DdiHypergraph) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.feature_dim() != params.feature_dim {
        return Err(Error::DimensionMismatch {
            context: "drug feature width",
            expected: params.feature_dim,
            got: g.feature_dim(),
        });
    }
    if g.num_side_effects() != params.num_side_effects {
        return Err(Error::DimensionMismatch {
            context: "side-effect count",
            expected: params.num_side_effects,
            got: g.num_side_effects(),
        });
    }
    let k = params.embedding_dim;
    let (nd, nv) = (g.num_drugs(), g.num_nodes());
    let mut hidden = vec![0.0; nd * k];
    let mut x0 = vec![0.0; nv * k];
    for d in 0..nd {
        let f = g.drug_feature_row(d);
        let h = &mut hidden[d * k..(d + 1) * k];
        h.copy_from_slice(&params.drug_hidden_bias);
        for (p, &fv) in f.iter().enumerate() {
            if fv == 0.0 {
                continue;
            }
            let row = &params.drug_hidden_weight[p * k..(p + 1) * k];
            for (hv, &wv) in h.iter_mut().zip(row) {
                *hv += fv * wv;
            }
        }
        for hv in h.iter_mut() {
            *hv = hv.max(0.0);
        }
        let out = &mut x0[d * k..(d + 1) * k];
        out.copy_from_slice(&params.drug_out_bias);
        for (a, &hv) in h.iter().enumerate().filter(|(_, &hv)| hv != 0.0) {
            let row = &params.drug_out_weight[a * k..(a + 1) * k];
            for (ov, &wv) in out.iter_mut().zip(row) {
                *ov += hv * wv;
            }
        }
        for ov in out.iter_mut() {
            *ov = ov.max(0.0);
        }
    }
    for t in 0..g.num_side_effects() {
        x0[(nd + t) * k..(nd + t + 1) * k]
            .copy_from_slice(&params.se_embedding[t * k..(t + 1) * k]);
    }
    check_finite(&x0, "input transform output")?;
    Ok((x0, hidden))
}

/// Full forward pass; builds the propagation operators for the method and
/// returns the final node embedding `X*`.
pub fn forward(params: &ModelParams, g: &DdiHypergraph, method: Method) -> Result<NodeEmbedding> {
    let ops = Operators::build(g, method, &params.weights, params.embedding_dim)?;
    let (embedding, _) = forward_with_operators(params, g, &ops)?;
    Ok(embedding)
}

/// Forward pass against prebuilt operators, keeping all intermediates.
pub(crate) fn forward_with_operators(
    params: &ModelParams,
    g: &DdiHypergraph,
    ops: &Operators,
) -> Result<(NodeEmbedding, ForwardTrace)> {
    let k = params.embedding_dim;
    let nv = g.num_nodes();
    let (x0, drug_hidden) = input_transform_raw(params, g)?;
    let num_layers = params.num_layers();
    let mut ytilde = Vec::with_capacity(num_layers);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let input = if l == 0 { &x0 } else { &outputs[l - 1] };
        let mut propagated = vec![0.0; nv * k];
        ops.propagate(input, &mut propagated, k);
        let theta = &params.layer_mixers[l];
        let mut out = vec![0.0; nv * k];
        for i in 0..nv {
            let yt = &propagated[i * k..(i + 1) * k];
            let o = &mut out[i * k..(i + 1) * k];
            for (a, &yv) in yt.iter().enumerate() {
                if yv == 0.0 {
                    continue;
                }
                let row = &theta[a * k..(a + 1) * k];
                for (ov, &tv) in o.iter_mut().zip(row) {
                    *ov += yv * tv;
                }
            }
            for ov in o.iter_mut() {
                *ov = ov.max(0.0);
            }
        }
        check_finite(&out, &format!("layer {} output", l + 1))?;
        ytilde.push(propagated);
        outputs.push(out);
    }
    let trace = ForwardTrace {
        drug_hidden,
        x0,
        ytilde,
        outputs,
    };
    let embedding = NodeEmbedding::from_parts(k, nv, trace.final_output().to_vec());
    Ok((embedding, trace))
}

/// Central-smoothness deviation of a triple on all dimensions:
/// `sum_k W[k][t] * ((x_u + x_v)/2 - x_t)^2`. Non-negative.
pub fn ssa(
    e: Triple,
    embedding: &NodeEmbedding,
    weights: &SideEffectWeights,
    num_drugs: usize,
) -> f64 {
    let k = embedding.num_dims();
    let xu = embedding.column(e.u);
    let xv = embedding.column(e.v);
    let xt = embedding.column(num_drugs + e.t);
    let mut acc = 0.0;
    for kk in 0..k {
        let delta = 0.5 * (xu[kk] + xv[kk]) - xt[kk];
        acc += weights.get(kk, e.t) * delta * delta;
    }
    acc
}

/// Prediction score `p = 1 / (1 + ssa)`, in `(0, 1]`.
pub fn score(
    e: Triple,
    embedding: &NodeEmbedding,
    weights: &SideEffectWeights,
    num_drugs: usize,
) -> f64 {
    1.0 / (1.0 + ssa(e, embedding, weights, num_drugs))
}

/// Threshold classification: predicted positive iff `score > h` (strict).
pub fn classify(
    e: Triple,
    embedding: &NodeEmbedding,
    weights: &SideEffectWeights,
    num_drugs: usize,
    h: f64,
) -> bool {
    score(e, embedding, weights, num_drugs) > h
}
