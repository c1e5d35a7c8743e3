//! Hypergraph Laplacians for the DDI hypergraph.
//!
//! The central-smoothing Laplacian `L_k` is the PSD matrix whose quadratic
//! form sums, over all hyperedges `(u, v, t)`, the weighted squared distance
//! between the side-effect embedding and the midpoint of the two drug
//! embeddings on dimension `k`:
//!
//! ```text
//! x' L_k x = sum_e W[k][t] * ((x_u + x_v)/2 - x_t)^2
//! ```
//!
//! Two independent construction routes are provided: the dense-style triple
//! product `H W_k H'` over the oriented incidence matrix (the oracle), and a
//! closed-form assembly that visits each edge once and runs in `O(|E|)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hypergraph::DdiHypergraph;
use crate::sparse::{CsrPattern, SparseSymMatrix};

/// Floor applied to degrees before inverse square roots, so isolated nodes
/// keep a unit self-loop instead of dividing by zero.
pub const DEGREE_EPS: f64 = 1e-8;

/// Weighted oriented incidence matrix: one column per hyperedge in
/// lexicographic edge order, with entries `1/2` at both drug rows and `-1`
/// at the side-effect row. Every column sums to zero.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    num_nodes: usize,
    /// Per edge: the three `(row, value)` pairs of its column.
    columns: Vec<[(usize, f64); 3]>,
}

impl IncidenceMatrix {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, e: usize) -> &[(usize, f64); 3] {
        &self.columns[e]
    }

    /// Dense column vector, for small-instance checks.
    pub fn column_dense(&self, e: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.num_nodes];
        for &(row, val) in &self.columns[e] {
            col[row] = val;
        }
        col
    }
}

/// Per-dimension non-negative side-effect relevance weights `W`, stored
/// row-major `K x |V_S|`. Row `k` supplies the diagonal hyperedge-weight
/// matrix for dimension `k` via `w_k(e) = W[k][t]` for `e = (u, v, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SideEffectWeights {
    num_dims: usize,
    num_side_effects: usize,
    data: Vec<f64>,
}

impl SideEffectWeights {
    pub fn ones(num_dims: usize, num_side_effects: usize) -> Self {
        SideEffectWeights {
            num_dims,
            num_side_effects,
            data: vec![1.0; num_dims * num_side_effects],
        }
    }

    pub fn from_vec(num_dims: usize, num_side_effects: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_dims * num_side_effects {
            return Err(Error::DimensionMismatch {
                context: "side-effect weight matrix",
                expected: num_dims * num_side_effects,
                got: data.len(),
            });
        }
        Ok(SideEffectWeights {
            num_dims,
            num_side_effects,
            data,
        })
    }

    pub fn num_dims(&self) -> usize {
        self.num_dims
    }

    pub fn num_side_effects(&self) -> usize {
        self.num_side_effects
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.data[k * self.num_side_effects + t]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.num_side_effects..(k + 1) * self.num_side_effects]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Clamp to the non-negative orthant (the projection step).
    pub fn project_nonnegative(&mut self) {
        for w in &mut self.data {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
    }
}

/// Builds the oriented incidence matrix, one column per edge in
/// lexicographic edge order.
pub fn build_incidence(g: &DdiHypergraph) -> IncidenceMatrix {
    let nd = g.num_drugs();
    let columns = g
        .edges()
        .iter()
        .map(|e| [(e.u, 0.5), (e.v, 0.5), (nd + e.t, -1.0)])
        .collect();
    IncidenceMatrix {
        num_nodes: g.num_nodes(),
        columns,
    }
}

/// Dense-style oracle: `L = H W H'` evaluated as a sum of weighted column
/// outer products. Independent of the closed-form assembly path.
pub fn central_laplacian_oracle(h: &IncidenceMatrix, edge_weights: &[f64]) -> Result<SparseSymMatrix> {
    if edge_weights.len() != h.num_edges() {
        return Err(Error::DimensionMismatch {
            context: "per-edge weights",
            expected: h.num_edges(),
            got: edge_weights.len(),
        });
    }
    if let Some((e, &w)) = edge_weights.iter().enumerate().find(|(_, &w)| w < 0.0) {
        return Err(Error::NegativeWeight { edge: e, value: w });
    }
    let mut coo = Vec::with_capacity(h.num_edges() * 6);
    for (col, &w) in h.columns.iter().zip(edge_weights) {
        for a in 0..3 {
            for b in a..3 {
                let (ra, va) = col[a];
                let (rb, vb) = col[b];
                coo.push((ra, rb, w * va * vb));
            }
        }
    }
    Ok(SparseSymMatrix::from_coo(h.num_nodes, coo))
}

/// Closed-form central Laplacian assembly, shared by every dimension.
///
/// Every entry of `L_k` is a fixed linear combination of row `k` of `W`:
/// the sparsity pattern and the per-slot coefficient lists depend only on
/// the edge set, so they are built once per graph (one pass over `E`) and
/// reused for all dimensions and all optimizer steps.
#[derive(Debug, Clone)]
pub struct CentralCoeffs {
    pattern: Arc<CsrPattern>,
    num_drugs: usize,
    /// Per-slot coefficient ranges into `coef_t` / `coef_c`.
    coef_ptr: Vec<usize>,
    coef_t: Vec<u32>,
    coef_c: Vec<f64>,
}

impl CentralCoeffs {
    /// One pass over the edge set accumulates the pair lists and the
    /// counters `n_d`/`m_d` (edges per drug-side-effect incidence) and `q`
    /// (edges per side effect), then lays the coefficients out in CSR order.
    pub fn build(g: &DdiHypergraph) -> CentralCoeffs {
        let nd = g.num_drugs();
        let ns = g.num_side_effects();
        let nv = g.num_nodes();
        let edges = g.edges();

        // Drug-side-effect incidence counts; for canonical deduplicated
        // triples, the edge count n_d(i, t) equals the partner count m_d(i, t).
        let mut incidences: Vec<(u32, u32)> = Vec::with_capacity(edges.len() * 2);
        let mut q = vec![0u32; ns];
        for e in edges {
            incidences.push((e.u as u32, e.t as u32));
            incidences.push((e.v as u32, e.t as u32));
            q[e.t] += 1;
        }
        incidences.sort_unstable();
        // (drug, side effect, count) runs.
        let mut md: Vec<(u32, u32, u32)> = Vec::new();
        for &(i, t) in &incidences {
            match md.last_mut() {
                Some(last) if last.0 == i && last.1 == t => last.2 += 1,
                _ => md.push((i, t, 1)),
            }
        }

        // Column lists per row: diagonal always present, drug-drug pairs from
        // the lexicographic edge runs, drug-side-effect slots from `md`.
        let mut row_cols: Vec<Vec<u32>> = (0..nv).map(|i| vec![i as u32]).collect();
        {
            let mut prev_pair = None;
            for e in edges {
                if prev_pair != Some((e.u, e.v)) {
                    row_cols[e.u].push(e.v as u32);
                    row_cols[e.v].push(e.u as u32);
                    prev_pair = Some((e.u, e.v));
                }
            }
        }
        for &(i, t, _) in &md {
            row_cols[i as usize].push((nd + t as usize) as u32);
            row_cols[nd + t as usize].push(i);
        }

        let mut row_ptr = vec![0usize; nv + 1];
        for (i, cols) in row_cols.iter_mut().enumerate() {
            cols.sort_unstable();
            row_ptr[i + 1] = row_ptr[i] + cols.len();
        }
        let col_idx: Vec<u32> = row_cols.into_iter().flatten().collect();
        let pattern = Arc::new(CsrPattern {
            dim: nv,
            row_ptr,
            col_idx,
        });

        // Coefficient lists per slot, gathered then laid out in slot order.
        let mut per_slot: Vec<Vec<(u32, f64)>> = vec![Vec::new(); pattern.nnz()];
        let slot = |i: usize, j: usize| pattern.slot(i, j).expect("slot present by construction");
        for e in edges {
            // Case i != j in V_D: 1/4 per matching side effect.
            per_slot[slot(e.u, e.v)].push((e.t as u32, 0.25));
            per_slot[slot(e.v, e.u)].push((e.t as u32, 0.25));
        }
        for &(i, t, count) in &md {
            let (i, tn) = (i as usize, nd + t as usize);
            // Case i in V_D, j in V_S: -1/2 * n_d(i, j) * W[k][j].
            per_slot[slot(i, tn)].push((t, -0.5 * count as f64));
            per_slot[slot(tn, i)].push((t, -0.5 * count as f64));
            // Drug diagonal: 1/4 * sum_t m_d(i, t) * W[k][t].
            per_slot[slot(i, i)].push((t, 0.25 * count as f64));
        }
        for (t, &count) in q.iter().enumerate() {
            if count > 0 {
                // Side-effect diagonal: q(i) * W[k][i].
                per_slot[slot(nd + t, nd + t)].push((t as u32, count as f64));
            }
        }

        let mut coef_ptr = vec![0usize; pattern.nnz() + 1];
        let mut coef_t = Vec::new();
        let mut coef_c = Vec::new();
        for (s, list) in per_slot.into_iter().enumerate() {
            for (t, c) in list {
                coef_t.push(t);
                coef_c.push(c);
            }
            coef_ptr[s + 1] = coef_t.len();
        }

        CentralCoeffs {
            pattern,
            num_drugs: nd,
            coef_ptr,
            coef_t,
            coef_c,
        }
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn num_drugs(&self) -> usize {
        self.num_drugs
    }

    /// Evaluate the Laplacian values for one weight row into `out`
    /// (length `nnz`). Returns the number of value writes performed, which
    /// is linear in `|E|` plus the mandatory diagonal slots.
    pub fn values(&self, w_row: &[f64], out: &mut [f64]) -> usize {
        debug_assert_eq!(out.len(), self.pattern.nnz());
        let mut writes = 0usize;
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for idx in self.coef_ptr[s]..self.coef_ptr[s + 1] {
                acc += self.coef_c[idx] * w_row[self.coef_t[idx] as usize];
                writes += 1;
            }
            *o = acc;
            writes += 1;
        }
        writes
    }

    /// All-dimension variant of [`CentralCoeffs::values`]: `w_tmajor` holds
    /// the weight matrix side-effect-major (`w[t*K + k]`), `out` is filled
    /// slot-major (`out[s*K + k]`).
    pub fn values_all(&self, w_tmajor: &[f64], num_dims: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.pattern.nnz() * num_dims);
        for s in 0..self.pattern.nnz() {
            let o = &mut out[s * num_dims..(s + 1) * num_dims];
            o.iter_mut().for_each(|v| *v = 0.0);
            for idx in self.coef_ptr[s]..self.coef_ptr[s + 1] {
                let c = self.coef_c[idx];
                let w = &w_tmajor[self.coef_t[idx] as usize * num_dims..][..num_dims];
                for (ov, &wv) in o.iter_mut().zip(w) {
                    *ov += c * wv;
                }
            }
        }
    }

    /// Reverse of [`CentralCoeffs::values`]: accumulate the gradient of a
    /// scalar loss w.r.t. the weight row, given the gradient w.r.t. the
    /// Laplacian value slots.
    pub fn grad_w(&self, lap_bar: &[f64], w_grad_row: &mut [f64]) {
        debug_assert_eq!(lap_bar.len(), self.pattern.nnz());
        for (s, &lb) in lap_bar.iter().enumerate() {
            if lb == 0.0 {
                continue;
            }
            for idx in self.coef_ptr[s]..self.coef_ptr[s + 1] {
                w_grad_row[self.coef_t[idx] as usize] += self.coef_c[idx] * lb;
            }
        }
    }

    /// Reverse of [`CentralCoeffs::values_all`]: scatter slot-major
    /// Laplacian gradients back onto the side-effect-major weight gradient.
    pub fn grad_w_all(&self, lap_bar: &[f64], num_dims: usize, w_grad_tmajor: &mut [f64]) {
        debug_assert_eq!(lap_bar.len(), self.pattern.nnz() * num_dims);
        for s in 0..self.pattern.nnz() {
            let lb = &lap_bar[s * num_dims..(s + 1) * num_dims];
            for idx in self.coef_ptr[s]..self.coef_ptr[s + 1] {
                let c = self.coef_c[idx];
                let wg = &mut w_grad_tmajor[self.coef_t[idx] as usize * num_dims..][..num_dims];
                for (g, &l) in wg.iter_mut().zip(lb) {
                    *g += c * l;
                }
            }
        }
    }

    /// Upper-triangle view of the Laplacian for one weight row.
    pub fn to_sym(&self, w_row: &[f64]) -> SparseSymMatrix {
        let mut vals = vec![0.0; self.pattern.nnz()];
        self.values(w_row, &mut vals);
        let mut coo = Vec::new();
        for i in 0..self.pattern.dim {
            for s in self.pattern.row(i) {
                let j = self.pattern.col_idx[s] as usize;
                if j >= i && vals[s] != 0.0 {
                    coo.push((i, j, vals[s]));
                }
            }
        }
        SparseSymMatrix::from_coo(self.pattern.dim, coo)
    }
}

/// Central-smoothing Laplacian for dimension `k`, assembled by the
/// four-case closed form in one pass over the edge set.
pub fn central_laplacian_closed_form(
    g: &DdiHypergraph,
    weights: &SideEffectWeights,
    k: usize,
) -> Result<SparseSymMatrix> {
    if k >= weights.num_dims() {
        return Err(Error::IndexOutOfRange {
            kind: "embedding dimension",
            index: k,
            limit: weights.num_dims(),
        });
    }
    if weights.num_side_effects() != g.num_side_effects() {
        return Err(Error::DimensionMismatch {
            context: "weight columns vs side effects",
            expected: g.num_side_effects(),
            got: weights.num_side_effects(),
        });
    }
    Ok(CentralCoeffs::build(g).to_sym(weights.row(k)))
}

/// Non-weighted central-smoothing Laplacian (`CentSimple`): the closed form
/// with every side-effect weight fixed to one. Identical for every
/// dimension, so it is computed once.
pub fn simple_laplacian(g: &DdiHypergraph) -> SparseSymMatrix {
    let ones = vec![1.0; g.num_side_effects()];
    CentralCoeffs::build(g).to_sym(&ones)
}

/// Plain-smoothing baseline: the clique-expansion Laplacian of each 3-node
/// hyperedge summed over the edge set, with unit hyperedge weights. Its
/// quadratic form is `sum_e sum_{(p,q) in e} (x_p - x_q)^2`.
pub fn baseline_smoothing_laplacian(g: &DdiHypergraph) -> SparseSymMatrix {
    let nd = g.num_drugs();
    let mut coo = Vec::with_capacity(g.num_edges() * 6);
    for e in g.edges() {
        let (u, v, t) = (e.u, e.v, nd + e.t);
        coo.push((u, u, 2.0));
        coo.push((v, v, 2.0));
        coo.push((t, t, 2.0));
        coo.push((u, v, -1.0));
        coo.push((u, t, -1.0));
        coo.push((v, t, -1.0));
    }
    SparseSymMatrix::from_coo(g.num_nodes(), coo)
}

/// Normalized adjacency with a self-loop: `2I - d^{-1/2} L d^{-1/2}` with
/// `d` the diagonal of `L` floored at `eps`. Flooring the diagonal before
/// normalizing makes every self-loop exactly one, so an isolated node keeps
/// a bare self-loop.
pub fn normalized_adjacency(l: &SparseSymMatrix, eps: f64) -> SparseSymMatrix {
    let dim = l.dim();
    let mut inv_sqrt_deg = vec![0.0; dim];
    for i in 0..dim {
        inv_sqrt_deg[i] = 1.0 / l.get(i, i).max(eps).sqrt();
    }
    let mut coo: Vec<(usize, usize, f64)> = (0..dim).map(|i| (i, i, 1.0)).collect();
    for &(i, j, w) in l.entries() {
        if i != j {
            let (i, j) = (i as usize, j as usize);
            coo.push((i, j, -w * inv_sqrt_deg[i] * inv_sqrt_deg[j]));
        }
    }
    SparseSymMatrix::from_coo(dim, coo)
}

/// Symmetric degree normalization of the adjacency: `D^{-1/2} A D^{-1/2}`
/// where `D_ii` is the absolute row sum of `A` floored at `eps`. Absolute
/// sums are used because the adjacency carries genuinely negative
/// drug-drug entries, so raw row sums can vanish or go negative.
pub fn propagation_operator(a: &SparseSymMatrix, eps: f64) -> SparseSymMatrix {
    let dim = a.dim();
    let mut abs_row_sum = vec![0.0; dim];
    for &(i, j, w) in a.entries() {
        abs_row_sum[i as usize] += w.abs();
        if i != j {
            abs_row_sum[j as usize] += w.abs();
        }
    }
    let inv_sqrt: Vec<f64> = abs_row_sum
        .iter()
        .map(|&d| 1.0 / d.max(eps).sqrt())
        .collect();
    let coo = a
        .entries()
        .iter()
        .map(|&(i, j, w)| (i as usize, j as usize, w * inv_sqrt[i as usize] * inv_sqrt[j as usize]));
    SparseSymMatrix::from_coo(dim, coo)
}
