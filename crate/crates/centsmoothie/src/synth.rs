//! Synthetic DDI benchmark generator.
//!
//! Each drug carries a few groups of features; the combination of one group
//! from each of two drugs determines a side effect. Generation has three
//! steps: enumerate side effects as unordered group pairs, sample per-drug
//! group subsets and noisy group-template features, then emit a triple for
//! every cross-group match of every drug pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hypergraph::DdiHypergraph;

/// Generator parameters. `sigma` is the scale parameter of the per-coordinate
/// Gaussian noise around the binary group template.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Number of feature groups `n`.
    pub num_groups: usize,
    /// Features per group `a`.
    pub features_per_group: usize,
    /// Number of drugs `D`.
    pub num_drugs: usize,
    /// Maximum groups per drug `m`.
    pub max_groups_per_drug: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_groups: 10,
            features_per_group: 3,
            num_drugs: 500,
            max_groups_per_drug: 1,
            sigma: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_side_effects(&self) -> usize {
        self.num_groups * (self.num_groups - 1) / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.num_groups * self.features_per_group
    }

    fn validate(&self) -> Result<()> {
        if self.max_groups_per_drug == 0 || self.max_groups_per_drug > self.num_groups {
            return Err(Error::InvalidConfig(format!(
                "max groups per drug must lie in [1, {}], got {}",
                self.num_groups, self.max_groups_per_drug
            )));
        }
        if self.num_groups < 2 {
            return Err(Error::InvalidConfig(
                "need at least two feature groups".into(),
            ));
        }
        if self.num_drugs < 2 {
            return Err(Error::InvalidConfig("need at least two drugs".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidConfig("sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-drug sampled groups; the generation ledger used by soundness checks
/// and written next to each emitted dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    pub num_groups: usize,
    pub features_per_group: usize,
    /// Sampled group subset of each drug, sorted ascending.
    pub groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Binary template `b_i`: coordinate `j` is one iff group `j / a` was
    /// sampled for the drug.
    pub fn template(&self, drug: usize) -> Vec<f64> {
        let a = self.features_per_group;
        let mut b = vec![0.0; self.num_groups * a];
        for &gr in &self.groups[drug] {
            for v in &mut b[gr * a..(gr + 1) * a] {
                *v = 1.0;
            }
        }
        b
    }
}

/// Side-effect index of an unordered group pair, enumerating pairs
/// `(g1, g2)` with `g1 < g2` lexicographically.
pub fn side_effect_index(num_groups: usize, g1: usize, g2: usize) -> usize {
    let (lo, hi) = (g1.min(g2), g1.max(g2));
    debug_assert!(lo < hi && hi < num_groups);
    // Pairs preceding row `lo`, then the offset within the row.
    lo * num_groups - lo * (lo + 1) / 2 + (hi - lo - 1)
}

/// Inverse of [`side_effect_index`].
pub fn side_effect_pair(num_groups: usize, index: usize) -> (usize, usize) {
    let mut remaining = index;
    for lo in 0..num_groups {
        let row = num_groups - lo - 1;
        if remaining < row {
            return (lo, lo + 1 + remaining);
        }
        remaining -= row;
    }
    panic!("side-effect index {index} out of range for {num_groups} groups");
}

/// Stable drug name used in emitted dataset files.
pub fn drug_name(index: usize) -> String {
    format!("d{index:04}")
}

/// Stable side-effect name for a group pair; lexicographic name order
/// matches the side-effect index order.
pub fn side_effect_name(num_groups: usize, index: usize) -> String {
    let (g1, g2) = side_effect_pair(num_groups, index);
    format!("s{g1:02}_{g2:02}")
}

/// Run the three-step generator.
pub fn generate(config: &SynthConfig) -> Result<(DdiHypergraph, GroupAssignment)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_groups;
    let a = config.features_per_group;
    let d = config.num_drugs;
    let noise = Normal::new(0.0, config.sigma).map_err(|_| {
        Error::InvalidConfig(format!("invalid Gaussian scale {}", config.sigma))
    })?;

    // Step 2: per-drug group subsets and noisy template features.
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(d);
    let mut features = Vec::with_capacity(d * n * a);
    let mut pool: Vec<usize> = (0..n).collect();
    for _ in 0..d {
        let count = rng.random_range(1..=config.max_groups_per_drug);
        for i in 0..count {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
        }
        let mut sampled: Vec<usize> = pool[..count].to_vec();
        sampled.sort_unstable();
        let assignment = GroupAssignment {
            num_groups: n,
            features_per_group: a,
            groups: vec![sampled.clone()],
        };
        let template = assignment.template(0);
        features.extend(template.iter().map(|&b| b + noise.sample(&mut rng)));
        groups.push(sampled);
    }

    // Step 3: cross-group matches of every drug pair.
    let mut raw = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            for &gi in &groups[i] {
                for &gj in &groups[j] {
                    if gi != gj {
                        raw.push((i, j, side_effect_index(n, gi, gj)));
                    }
                }
            }
        }
    }
    let g = DdiHypergraph::build(d, config.num_side_effects(), &raw, features, n * a)?;
    Ok((
        g,
        GroupAssignment {
            num_groups: n,
            features_per_group: a,
            groups,
        },
    ))
}

/// One dataset per requested `m`, each with a seed derived from the base
/// seed and `m`.
pub fn sweep(
    base: &SynthConfig,
    m_values: &[usize],
) -> Result<Vec<(usize, DdiHypergraph, GroupAssignment)>> {
    m_values
        .iter()
        .map(|&m| {
            let config = SynthConfig {
                max_groups_per_drug: m,
                seed: derive_seed(base.seed, m as u64),
                ..base.clone()
            };
            generate(&config).map(|(g, ledger)| (m, g, ledger))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small_config(m: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            num_groups: 5,
            features_per_group: 2,
            num_drugs: 12,
            max_groups_per_drug: m,
            sigma: 0.01,
            seed,
        }
    }

    #[test]
    fn ten_groups_give_45_side_effects() {
        let config = SynthConfig {
            num_drugs: 6,
            ..SynthConfig::default()
        };
        let (g, _) = generate(&config).unwrap();
        assert_eq!(g.num_side_effects(), 45);
        assert_eq!(g.feature_dim(), 30);
    }

    #[test]
    fn side_effect_index_round_trips() {
        let n = 10;
        let mut seen = BTreeSet::new();
        for g1 in 0..n {
            for g2 in (g1 + 1)..n {
                let idx = side_effect_index(n, g1, g2);
                assert_eq!(side_effect_pair(n, idx), (g1, g2));
                assert_eq!(side_effect_index(n, g2, g1), idx);
                seen.insert(idx);
            }
        }
        assert_eq!(seen.len(), 45);
        assert_eq!(*seen.iter().next_back().unwrap(), 44);
    }

    #[test]
    fn side_effect_names_sort_like_indices() {
        let n = 10;
        let names: Vec<String> = (0..45).map(|t| side_effect_name(n, t)).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    /// Brute-force re-derivation of the edge set from the ledger.
    fn expected_edges(config: &SynthConfig, ledger: &GroupAssignment) -> BTreeSet<(usize, usize, usize)> {
        let mut expected = BTreeSet::new();
        for i in 0..config.num_drugs {
            for j in (i + 1)..config.num_drugs {
                for &gi in &ledger.groups[i] {
                    for &gj in &ledger.groups[j] {
                        if gi != gj {
                            expected.insert((i, j, side_effect_index(config.num_groups, gi, gj)));
                        }
                    }
                }
            }
        }
        expected
    }

    #[test]
    fn triples_complete_and_sound_against_ledger() {
        for m in [1, 2, 4] {
            let config = small_config(m, 31 + m as u64);
            let (g, ledger) = generate(&config).unwrap();
            let expected = expected_edges(&config, &ledger);
            let actual: BTreeSet<_> = g.edges().iter().map(|e| (e.u, e.v, e.t)).collect();
            assert_eq!(actual, expected, "m={m}");
            // Soundness: each triple's group pair comes from the two drugs.
            for e in g.edges() {
                let (g1, g2) = side_effect_pair(config.num_groups, e.t);
                let gu: BTreeSet<_> = ledger.groups[e.u].iter().copied().collect();
                let gv: BTreeSet<_> = ledger.groups[e.v].iter().copied().collect();
                assert!(
                    (gu.contains(&g1) && gv.contains(&g2)) || (gu.contains(&g2) && gv.contains(&g1))
                );
            }
        }
    }

    #[test]
    fn singleton_groups_forced_triples() {
        let config = small_config(1, 7);
        let (g, ledger) = generate(&config).unwrap();
        for i in 0..config.num_drugs {
            assert_eq!(ledger.groups[i].len(), 1);
        }
        for i in 0..config.num_drugs {
            for j in (i + 1)..config.num_drugs {
                let (gi, gj) = (ledger.groups[i][0], ledger.groups[j][0]);
                let count = g.edges().iter().filter(|e| e.u == i && e.v == j).count();
                if gi == gj {
                    assert_eq!(count, 0, "same singleton group pair ({i},{j})");
                } else {
                    assert_eq!(count, 1);
                    let e = g.edges().iter().find(|e| e.u == i && e.v == j).unwrap();
                    assert_eq!(e.t, side_effect_index(config.num_groups, gi, gj));
                }
            }
        }
    }

    #[test]
    fn features_stay_near_templates() {
        let config = small_config(3, 12);
        let (g, ledger) = generate(&config).unwrap();
        let mut total_dev = 0.0;
        let mut count = 0usize;
        for d in 0..config.num_drugs {
            let template = ledger.template(d);
            for (f, b) in g.drug_feature_row(d).iter().zip(&template) {
                total_dev += (f - b).abs();
                count += 1;
            }
        }
        assert!(total_dev / count as f64 <= 3.0 * config.sigma);
    }

    #[test]
    fn sweep_produces_one_dataset_per_m() {
        let base = small_config(1, 5);
        let datasets = sweep(&base, &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(datasets.len(), 5);
        for (m, g, ledger) in &datasets {
            assert!(ledger.groups.iter().all(|gr| gr.len() <= *m));
            assert!(g.num_edges() > 0);
        }
        assert!(sweep(&base, &[]).unwrap().is_empty());
        let again = sweep(&base, &[1, 2, 3, 4, 5]).unwrap();
        for ((_, g1, _), (_, g2, _)) in datasets.iter().zip(&again) {
            assert_eq!(g1.edges(), g2.edges());
            assert_eq!(g1.drug_feature_row(0), g2.drug_feature_row(0));
        }
    }

    #[test]
    fn rejects_m_above_group_count() {
        let mut config = small_config(1, 1);
        config.max_groups_per_drug = config.num_groups + 1;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config(3, 77);
        let (g1, l1) = generate(&config).unwrap();
        let (g2, l2) = generate(&config).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        assert_eq!(l1, l2);
        assert_eq!(g1.drug_feature_row(3), g2.drug_feature_row(3));
    }
}
