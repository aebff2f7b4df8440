//! Compressed sparse row storage and the kernels built on it.
//!
//! All kernels accumulate strictly row-major with increasing column index,
//! so a product is a pure function of the stored entries and the input
//! vector, independent of how many threads call it.

use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};

/// A real matrix in canonical CSR form: column indices strictly increasing
/// within each row, no duplicates, all values finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a canonical CSR matrix; duplicate `(row, col)` pairs are summed.
    pub fn from_triplets(
        entries: &[(usize, usize, f64)],
        n_rows: usize,
        n_cols: usize,
    ) -> Result<Self> {
        for &(row, col, value) in entries {
            if row >= n_rows {
                return Err(HomfError::RowOutOfRange {
                    row,
                    col,
                    value,
                    n_rows,
                });
            }
            if col >= n_cols {
                return Err(HomfError::ColumnOutOfRange {
                    row,
                    col,
                    value,
                    n_cols,
                });
            }
            if !value.is_finite() {
                return Err(HomfError::NonFiniteEntry { row, col, value });
            }
        }

        // Counting sort by row keeps input order within a row, so duplicates
        // are summed in the order they were supplied.
        let mut counts = vec![0usize; n_rows + 1];
        for &(row, _, _) in entries {
            counts[row + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0f64; entries.len()];
        for &(row, col, value) in entries {
            let slot = next[row];
            cols[slot] = col;
            vals[slot] = value;
            next[row] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut iter = scratch.iter().copied().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }

        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from dense rows, storing only nonzero entries.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(HomfError::DimensionMismatch {
                    op: "from_dense",
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            entries.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, &v)| (i, j, v)),
            );
        }
        Self::from_triplets(&entries, n_rows, n_cols)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    /// Stored value at `(i, j)`, or 0 when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |p| vals[p])
    }

    /// Iterates stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// Dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        let (cols, vals) = self.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            out[j] = v;
        }
        out
    }

    /// Dense copy of column `j`, found by a binary search in every row.
    pub fn dense_column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(HomfError::DimensionMismatch {
                op: "spmv",
                expected: self.n_cols,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked `y = A x`; lengths are debug-asserted.
    #[inline]
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
    }

    /// `y = base + A x`, with the product for each row accumulated before
    /// the addition.
    #[inline]
    pub fn spmv_add_into(&self, x: &[f64], base: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(base.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = base[i] + acc;
        }
    }

    /// `y = Aᵀ x` without materializing the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(HomfError::DimensionMismatch {
                op: "spmv_transpose",
                expected: self.n_rows,
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_cols];
        self.spmv_transpose_into(x, &mut y);
        Ok(y)
    }

    /// Scatter form of `Aᵀ x`. Each output component receives its terms in
    /// increasing row order, which is the gather order of `transpose().spmv`,
    /// so both give bitwise-identical results.
    #[inline]
    pub fn spmv_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        // Rows visited in increasing order, so each transposed row comes out sorted.
        for (i, j, v) in self.triplets() {
            let slot = next[j];
            col_indices[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Scales every row to sum to one. Rows with zero sum become a unit
    /// self-loop (square matrices only for that case); stored zeros are dropped.
    pub fn row_normalize(&self) -> Result<SparseMatrix> {
        if let Some((i, j, v)) = self.triplets().find(|&(_, _, v)| v < 0.0) {
            return Err(HomfError::NegativeWeight {
                row: i,
                col: j,
                value: v,
            });
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let sum: f64 = vals.iter().sum();
            if sum > 0.0 {
                for (&j, &v) in cols.iter().zip(vals) {
                    if v > 0.0 {
                        col_indices.push(j);
                        values.push(v / sum);
                    }
                }
            } else {
                if i >= self.n_cols {
                    return Err(HomfError::InvalidParameter(format!(
                        "row {i} has zero sum and no diagonal slot in a {}×{} matrix",
                        self.n_rows, self.n_cols
                    )));
                }
                col_indices.push(i);
                values.push(1.0);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// First stored position whose mirror entry differs, if any.
    pub fn asymmetry(&self) -> Option<(usize, usize)> {
        if self.n_rows != self.n_cols {
            return Some((self.n_rows, self.n_cols));
        }
        let t = self.transpose();
        if t.col_indices == self.col_indices && t.values == self.values {
            return None;
        }
        (0..self.n_rows).find_map(|i| {
            let (cols, vals) = self.row(i);
            let (tcols, tvals) = t.row(i);
            if cols == tcols && vals == tvals {
                return None;
            }
            let j = cols
                .iter()
                .zip(vals)
                .find(|(&j, &v)| t.get(i, j) != v)
                .map(|(&j, _)| j)
                .or_else(|| tcols.iter().copied().find(|&j| self.get(i, j) == 0.0))
                .unwrap_or(0);
            Some((i, j))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry().is_none()
    }

    /// Applies `f` to every stored value; entries mapped to exactly zero are dropped.
    pub fn try_map_values<F>(&self, mut f: F) -> Result<SparseMatrix>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let mut entries = Vec::with_capacity(self.nnz());
        for (i, j, v) in self.triplets() {
            let w = f(v)?;
            if w != 0.0 {
                entries.push((i, j, w));
            }
        }
        SparseMatrix::from_triplets(&entries, self.n_rows, self.n_cols)
    }
}
