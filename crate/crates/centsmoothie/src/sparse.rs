//! Sparse symmetric matrices.
//!
//! `SparseSymMatrix` stores the upper triangle plus diagonal as coordinate
//! lists; symmetry holds by construction. Before propagation the matrix is
//! finalized into compressed-row form (`CsrMatrix`) with both halves
//! materialized, which is the hot-loop representation.

use std::io::{self, Write};
use std::sync::Arc;

/// Symmetric sparse matrix; entries hold the upper triangle (`row <= col`)
/// sorted by `(row, col)` with duplicates merged.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl SparseSymMatrix {
    pub fn zero(dim: usize) -> SparseSymMatrix {
        SparseSymMatrix {
            dim,
            entries: Vec::new(),
        }
    }

    /// Build from coordinate triplets. Entries below the diagonal are
    /// mirrored to the upper triangle; duplicate coordinates accumulate.
    pub fn from_coo(dim: usize, coo: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut entries: Vec<(u32, u32, f64)> = coo
            .into_iter()
            .map(|(i, j, w)| {
                debug_assert!(i < dim && j < dim);
                (i.min(j) as u32, i.max(j) as u32, w)
            })
            .collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for (i, j, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }
        SparseSymMatrix {
            dim,
            entries: merged,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored upper-triangle entries in `(row, col)` order.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    /// Symmetric lookup: `get(i, j) == get(j, i)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j) as u32, i.max(j) as u32);
        match self
            .entries
            .binary_search_by_key(&key, |&(r, c, _)| (r, c))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => 0.0,
        }
    }

    /// x' L x over the symmetric matrix.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for &(i, j, w) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            if i == j {
                acc += w * x[i] * x[i];
            } else {
                acc += 2.0 * w * x[i] * x[j];
            }
        }
        acc
    }

    /// Maximum absolute entrywise difference, taken over the union of both
    /// patterns.
    pub fn max_abs_diff(&self, other: &SparseSymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst = 0.0f64;
        for &(i, j, w) in &self.entries {
            worst = worst.max((w - other.get(i as usize, j as usize)).abs());
        }
        for &(i, j, w) in &other.entries {
            worst = worst.max((w - self.get(i as usize, j as usize)).abs());
        }
        worst
    }

    /// Dense copy for small-instance tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim * self.dim];
        for &(i, j, w) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            dense[i * self.dim + j] = w;
            dense[j * self.dim + i] = w;
        }
        dense
    }

    /// Finalize to compressed-row form with both symmetric halves present.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.dim + 1];
        for &(i, j, _) in &self.entries {
            counts[i as usize + 1] += 1;
            if i != j {
                counts[j as usize + 1] += 1;
            }
        }
        for r in 0..self.dim {
            counts[r + 1] += counts[r];
        }
        let nnz = counts[self.dim];
        let mut col_idx = vec![0u32; nnz];
        let mut values = vec![0.0f64; nnz];
        let mut cursor = counts.clone();
        for &(i, j, w) in &self.entries {
            let (iu, ju) = (i as usize, j as usize);
            col_idx[cursor[iu]] = j;
            values[cursor[iu]] = w;
            cursor[iu] += 1;
            if i != j {
                col_idx[cursor[ju]] = i;
                values[cursor[ju]] = w;
                cursor[ju] += 1;
            }
        }
        // Upper entries are (row, col) sorted, so each row's columns come out
        // ascending: first the mirrored (col < row) entries in order, then the
        // native (col >= row) ones. Verify in debug builds.
        let pattern = CsrPattern {
            dim: self.dim,
            row_ptr: counts,
            col_idx,
        };
        debug_assert!(pattern.rows_sorted());
        CsrMatrix {
            pattern: Arc::new(pattern),
            values,
        }
    }

    /// Coordinate-list text dump: one `row col value` line per stored
    /// nonzero (`row < col` or `row == col`), sorted.
    pub fn dump_coordinates(&self, out: &mut impl Write) -> io::Result<()> {
        for &(i, j, w) in &self.entries {
            writeln!(out, "{} {} {}", i, j, w)?;
        }
        Ok(())
    }
}

/// Sparsity structure of a CSR matrix, shared between per-dimension value
/// arrays during training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
}

impl CsrPattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Slot of entry `(i, j)` in the value array, if structurally present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row(i);
        let cols = &self.col_idx[range.clone()];
        cols.binary_search(&(j as u32)).ok().map(|p| range.start + p)
    }

    fn rows_sorted(&self) -> bool {
        (0..self.dim).all(|i| self.col_idx[self.row(i)].windows(2).all(|w| w[0] < w[1]))
    }
}

/// y = A x for a CSR pattern with an external value slice.
pub fn csr_matvec(pattern: &CsrPattern, values: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(values.len(), pattern.nnz());
    debug_assert_eq!(x.len(), pattern.dim);
    debug_assert_eq!(y.len(), pattern.dim);
    for i in 0..pattern.dim {
        let range = pattern.row(i);
        let mut acc = 0.0;
        for (&j, &w) in pattern.col_idx[range.clone()].iter().zip(&values[range]) {
            acc += w * x[j as usize];
        }
        y[i] = acc;
    }
}

/// CSR matrix with both symmetric halves stored.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        csr_matvec(&self.pattern, &self.values, x, y);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |s| self.values[s])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coo_merges_duplicates_and_mirrors() {
        let m = SparseSymMatrix::from_coo(3, vec![(1, 0, 1.0), (0, 1, 2.0), (2, 2, -1.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), -1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.entries().len(), 2);
    }

    #[test]
    fn quadratic_form_counts_off_diagonals_twice() {
        let m = SparseSymMatrix::from_coo(2, vec![(0, 0, 1.0), (0, 1, -1.0), (1, 1, 1.0)]);
        let q = m.quadratic_form(&[1.0, -1.0]);
        assert_eq!(q, 4.0);
    }

    #[test]
    fn csr_round_trip_and_matvec() {
        let m = SparseSymMatrix::from_coo(3, vec![(0, 1, 2.0), (1, 2, -1.0), (0, 0, 1.0)]);
        let csr = m.to_csr();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(csr.get(i, j), m.get(i, j), "entry ({i},{j})");
            }
        }
        let mut y = vec![0.0; 3];
        csr.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![5.0, -1.0, -2.0]);
    }

    #[test]
    fn dump_lists_upper_triangle_sorted() {
        let m = SparseSymMatrix::from_coo(3, vec![(2, 1, 0.5), (0, 0, 1.0)]);
        let mut buf = Vec::new();
        m.dump_coordinates(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0 1\n1 2 0.5\n");
    }
}
