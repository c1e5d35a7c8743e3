//! Central-smoothing hypergraph neural networks for predicting
//! drug-drug-interaction side effects.
//!
//! A drug-drug interaction dataset is modeled as a 3-uniform hypergraph
//! whose hyperedges are `(drug, drug, side effect)` triples. The model
//! learns drug and side-effect embeddings jointly under a central-smoothing
//! assumption: a side effect's embedding should sit near a weighted
//! midpoint of the two drug embeddings. The crate provides
//!
//! * the hypergraph data model ([`hypergraph`]),
//! * closed-form and oracle builders for the central-smoothing Laplacian,
//!   its non-weighted variant and a plain-smoothing baseline ([`laplacian`]),
//! * the spectral-convolution model and triple scoring ([`model`]),
//! * projected-gradient training with exact analytic gradients ([`train`]),
//! * a synthetic benchmark generator ([`synth`]),
//! * stratified cross-validation and ranking metrics ([`metrics`]),
//! * file formats and a Fisher-exact-test extraction pipeline ([`ingest`]).

pub mod error;
pub mod hypergraph;
pub mod ingest;
pub mod laplacian;
pub mod metrics;
pub mod model;
pub mod sparse;
pub mod synth;
pub mod testutil;
pub mod train;

pub use error::{Error, Result};
pub use hypergraph::{DdiHypergraph, NodeId, Triple};

/// Deterministically derive a child RNG seed from a base seed and a salt
/// (fold index, epoch, sweep parameter). SplitMix64 finalizer.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
