//! Seeded random instance generators shared by unit, property and
//! acceptance tests.

use rand::Rng;

use crate::hypergraph::DdiHypergraph;
use crate::laplacian::SideEffectWeights;

/// Random hypergraph with up to the given node/edge budgets and random
/// dense drug features (feature width 3).
pub fn random_hypergraph(
    rng: &mut impl Rng,
    max_drugs: usize,
    max_side_effects: usize,
    max_edges: usize,
) -> DdiHypergraph {
    let nd = rng.random_range(2..=max_drugs.max(2));
    let ns = rng.random_range(1..=max_side_effects.max(1));
    let num_raw = rng.random_range(0..=max_edges);
    let mut raw = Vec::with_capacity(num_raw);
    for _ in 0..num_raw {
        let u = rng.random_range(0..nd);
        let mut v = rng.random_range(0..nd);
        if v == u {
            v = (v + 1) % nd;
        }
        raw.push((u, v, rng.random_range(0..ns)));
    }
    let feature_dim = 3;
    let features: Vec<f64> = (0..nd * feature_dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    DdiHypergraph::build(nd, ns, &raw, features, feature_dim).unwrap()
}

/// Random non-negative side-effect weight matrix.
pub fn random_weights(rng: &mut impl Rng, num_dims: usize, num_side_effects: usize) -> SideEffectWeights {
    let data: Vec<f64> = (0..num_dims * num_side_effects)
        .map(|_| rng.random_range(0.0..2.0))
        .collect();
    SideEffectWeights::from_vec(num_dims, num_side_effects, data).unwrap()
}
