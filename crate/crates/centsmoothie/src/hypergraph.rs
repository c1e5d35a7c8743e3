//! Drug-drug-interaction hypergraph data model.
//!
//! Nodes are drugs and side effects; every hyperedge is a triple of two
//! distinct drugs and one side effect. Drugs occupy flat indices
//! `[0, num_drugs)` and side effects `[num_drugs, num_nodes)`, which fixes
//! the row/column layout of every Laplacian built downstream.

use crate::error::{Error, Result};

/// A node is either a drug or a side effect, indexed within its own kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeId {
    Drug(usize),
    SideEffect(usize),
}

impl NodeId {
    /// Flat index into `[0, |V|)`: drugs first, then side effects.
    pub fn flat_index(self, num_drugs: usize) -> usize {
        match self {
            NodeId::Drug(i) => i,
            NodeId::SideEffect(t) => num_drugs + t,
        }
    }

    pub fn from_flat(flat: usize, num_drugs: usize) -> NodeId {
        if flat < num_drugs {
            NodeId::Drug(flat)
        } else {
            NodeId::SideEffect(flat - num_drugs)
        }
    }
}

/// A canonical hyperedge `(u, v, t)`: two distinct drugs (`u < v`) and a
/// side effect. `(u, v, t)` and `(v, u, t)` denote the same hyperedge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub u: usize,
    pub v: usize,
    pub t: usize,
}

impl Triple {
    /// Canonicalize a raw triple: orders the drug pair and checks ranges.
    /// Rejects self-pairs; a drug pair is always two distinct drugs.
    pub fn canonicalize(
        u: usize,
        v: usize,
        t: usize,
        num_drugs: usize,
        num_side_effects: usize,
    ) -> Result<Triple> {
        if u >= num_drugs {
            return Err(Error::IndexOutOfRange {
                kind: "drug",
                index: u,
                limit: num_drugs,
            });
        }
        if v >= num_drugs {
            return Err(Error::IndexOutOfRange {
                kind: "drug",
                index: v,
                limit: num_drugs,
            });
        }
        if t >= num_side_effects {
            return Err(Error::IndexOutOfRange {
                kind: "side effect",
                index: t,
                limit: num_side_effects,
            });
        }
        if u == v {
            return Err(Error::SelfPair(u));
        }
        Ok(Triple {
            u: u.min(v),
            v: u.max(v),
            t,
        })
    }
}

/// The DDI hypergraph: node counts, the deduplicated canonical edge set in
/// lexicographic order, and the dense drug feature matrix.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct DdiHypergraph {
    num_drugs: usize,
    num_side_effects: usize,
    edges: Vec<Triple>,
    /// Row-major `num_drugs x feature_dim`.
    drug_features: Vec<f64>,
    feature_dim: usize,
}

impl DdiHypergraph {
    /// Build from raw (possibly unordered, possibly duplicated) triples.
    /// Edges are canonicalized, deduplicated and sorted lexicographically so
    /// downstream matrix assembly and sampling are deterministic.
    pub fn build(
        num_drugs: usize,
        num_side_effects: usize,
        raw_triples: &[(usize, usize, usize)],
        drug_features: Vec<f64>,
        feature_dim: usize,
    ) -> Result<DdiHypergraph> {
        if drug_features.len() != num_drugs * feature_dim {
            return Err(Error::DimensionMismatch {
                context: "drug feature rows",
                expected: num_drugs * feature_dim,
                got: drug_features.len(),
            });
        }
        let mut edges = Vec::with_capacity(raw_triples.len());
        for &(u, v, t) in raw_triples {
            edges.push(Triple::canonicalize(u, v, t, num_drugs, num_side_effects)?);
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(DdiHypergraph {
            num_drugs,
            num_side_effects,
            edges,
            drug_features,
            feature_dim,
        })
    }

    /// Rebuild with a different edge list over the same node sets and
    /// features (used by cross-validation to drop a test fold).
    pub fn with_edges(&self, raw_triples: &[(usize, usize, usize)]) -> Result<DdiHypergraph> {
        DdiHypergraph::build(
            self.num_drugs,
            self.num_side_effects,
            raw_triples,
            self.drug_features.clone(),
            self.feature_dim,
        )
    }

    pub fn num_drugs(&self) -> usize {
        self.num_drugs
    }

    pub fn num_side_effects(&self) -> usize {
        self.num_side_effects
    }

    /// Total node count `|V| = |V_D| + |V_S|`.
    pub fn num_nodes(&self) -> usize {
        self.num_drugs + self.num_side_effects
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(u, v, t)` order.
    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Feature row of one drug.
    pub fn drug_feature_row(&self, drug: usize) -> &[f64] {
        &self.drug_features[drug * self.feature_dim..(drug + 1) * self.feature_dim]
    }

    pub fn contains_edge(&self, triple: Triple) -> bool {
        self.edges.binary_search(&triple).is_ok()
    }

    /// True iff the canonical triple lies in the complement of the edge set.
    pub fn negative_complement_contains(&self, triple: Triple) -> Result<bool> {
        // Validate ranges; canonical order is the caller's responsibility but
        // we normalize defensively so mirrored queries behave identically.
        let canon = Triple::canonicalize(
            triple.u,
            triple.v,
            triple.t,
            self.num_drugs,
            self.num_side_effects,
        )?;
        Ok(!self.contains_edge(canon))
    }

    /// Size of the full triple space `C(|V_D|, 2) * |V_S|`.
    pub fn triple_space_size(&self) -> usize {
        self.num_drugs * (self.num_drugs - 1) / 2 * self.num_side_effects
    }

    /// Flat node index of a side effect.
    pub fn side_effect_node(&self, t: usize) -> usize {
        self.num_drugs + t
    }

    /// Number of edges carrying each side effect (`q` in the Laplacian
    /// assembly; also the per-side-effect positive frequency).
    pub fn side_effect_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_side_effects];
        for e in &self.edges {
            counts[e.t] += 1;
        }
        counts
    }
}
