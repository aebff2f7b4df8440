//! On-demand columns and rows of `f_T(A) = (A + A² + … + Aᵀ) / T`.
//!
//! A column is built with the recursion `a₁ = A eᵢ`, `aₜ = a₁ + A aₜ₋₁`,
//! which gives `a_T = (A + … + Aᵀ) eᵢ` after `T − 1` matvecs. Rows use the
//! same recursion on `Aᵀ`, since `f_T(A)ᵀ = f_T(Aᵀ)`.

use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};
use crate::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Walk length `T ≥ 1`.
    pub steps: usize,
    /// Entries with `|v| ≤ support_epsilon` are left out of the reported support.
    pub support_epsilon: f64,
}

impl WalkConfig {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            support_epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(HomfError::InvalidParameter(
                "walk length must be at least 1".into(),
            ));
        }
        if !(self.support_epsilon >= 0.0 && self.support_epsilon.is_finite()) {
            return Err(HomfError::InvalidParameter(format!(
                "support_epsilon must be a finite non-negative number, got {}",
                self.support_epsilon
            )));
        }
        Ok(())
    }
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self::new(4)
    }
}

/// Work done by the sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WalkStats {
    pub matvecs: u64,
}

impl std::ops::AddAssign for WalkStats {
    fn add_assign(&mut self, rhs: Self) {
        self.matvecs += rhs.matvecs;
    }
}

/// Reusable work vectors for one sampler; one per worker.
#[derive(Clone, Debug, Default)]
pub struct WalkBuffers {
    first: Vec<f64>,
    prev: Vec<f64>,
    next: Vec<f64>,
}

impl WalkBuffers {
    pub fn new(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            prev: vec![0.0; n],
            next: vec![0.0; n],
        }
    }

    fn resize(&mut self, n: usize) {
        self.first.resize(n, 0.0);
        self.prev.resize(n, 0.0);
        self.next.resize(n, 0.0);
    }
}

/// Runs the recursion with `buf.first` already holding `a₁`. On return
/// `buf.prev` holds `a_T / T`.
fn recurse<F>(buf: &mut WalkBuffers, steps: usize, stats: &mut WalkStats, mut step: F)
where
    F: FnMut(&[f64], &[f64], &mut [f64]),
{
    buf.prev.copy_from_slice(&buf.first);
    for _ in 2..=steps {
        step(&buf.prev, &buf.first, &mut buf.next);
        std::mem::swap(&mut buf.prev, &mut buf.next);
        stats.matvecs += 1;
    }
    let t = steps as f64;
    for v in buf.prev.iter_mut() {
        *v /= t;
    }
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(HomfError::DimensionMismatch {
            op: "transition matrix must be square",
            expected: a.n_rows(),
            actual: a.n_cols(),
        });
    }
    Ok(())
}

fn check_node(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(HomfError::IndexOutOfRange {
            what: "node",
            index: i,
            size: n,
        });
    }
    Ok(())
}

/// Column `i` of `f_T(A)`, counting matvecs into `stats`.
pub fn sample_column_counted(
    a: &SparseMatrix,
    i: usize,
    cfg: &WalkConfig,
    stats: &mut WalkStats,
) -> Result<Vec<f64>> {
    check_square(a)?;
    cfg.validate()?;
    check_node(i, a.n_rows())?;
    let mut buf = WalkBuffers::new(a.n_rows());
    buf.first = a.dense_column(i);
    recurse(&mut buf, cfg.steps, stats, |x, base, y| a.spmv_add_into(x, base, y));
    Ok(buf.prev)
}

/// Column `i` of `f_T(A)`.
pub fn sample_column(a: &SparseMatrix, i: usize, cfg: &WalkConfig) -> Result<Vec<f64>> {
    sample_column_counted(a, i, cfg, &mut WalkStats::default())
}

/// Row `i` of `f_T(A)` via the transpose kernel, counting matvecs into `stats`.
pub fn sample_row_counted(
    a: &SparseMatrix,
    i: usize,
    cfg: &WalkConfig,
    stats: &mut WalkStats,
) -> Result<Vec<f64>> {
    check_square(a)?;
    cfg.validate()?;
    check_node(i, a.n_rows())?;
    let mut buf = WalkBuffers::new(a.n_rows());
    buf.first = a.dense_row(i);
    recurse(&mut buf, cfg.steps, stats, |x, base, y| {
        a.spmv_transpose_into(x, y);
        for (yi, bi) in y.iter_mut().zip(base) {
            *yi = bi + *yi;
        }
    });
    Ok(buf.prev)
}

/// Row `i` of `f_T(A)`.
pub fn sample_row(a: &SparseMatrix, i: usize, cfg: &WalkConfig) -> Result<Vec<f64>> {
    sample_row_counted(a, i, cfg, &mut WalkStats::default())
}

/// Ascending indices with `|vⱼ| > support_epsilon`.
pub fn support(v: &[f64], cfg: &WalkConfig) -> Vec<usize> {
    let eps = cfg.support_epsilon;
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > eps)
        .map(|(j, _)| j)
        .collect()
}

/// Eigenvalue of `f_T(A)` belonging to eigenvalue `lambda` of `A`:
/// `(λ + λ² + … + λᵀ) / T`.
pub fn eigen_map(lambda: f64, steps: usize) -> f64 {
    if lambda == 1.0 {
        return 1.0;
    }
    let t = steps as f64;
    // The closed form cancels catastrophically near λ = 1.
    if steps <= 64 || (1.0 - lambda).abs() < 1e-3 {
        let mut acc = 0.0;
        for _ in 0..steps {
            acc = lambda * (1.0 + acc);
        }
        return acc / t;
    }
    lambda * (1.0 - lambda.powi(steps as i32)) / ((1.0 - lambda) * t)
}

/// A transition matrix stored together with its transpose, so rows and
/// columns of `f_T(A)` are both sampled with gather-style kernels.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    forward: SparseMatrix,
    backward: SparseMatrix,
}

impl TransitionMatrix {
    pub fn new(a: SparseMatrix) -> Result<Self> {
        check_square(&a)?;
        let backward = a.transpose();
        Ok(Self {
            forward: a,
            backward,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.forward.n_rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.forward
    }

    pub fn transposed(&self) -> &SparseMatrix {
        &self.backward
    }

    pub fn into_inner(self) -> SparseMatrix {
        self.forward
    }

    fn load(first: &mut [f64], src: &SparseMatrix, i: usize) {
        first.fill(0.0);
        let (cols, vals) = src.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            first[j] = v;
        }
    }

    /// Column `i` of `f_T(A)` written into `buf`; returns the result slice.
    /// Bitwise equal to [`sample_column`].
    pub fn column_into<'b>(
        &self,
        i: usize,
        cfg: &WalkConfig,
        buf: &'b mut WalkBuffers,
        stats: &mut WalkStats,
    ) -> Result<&'b [f64]> {
        cfg.validate()?;
        check_node(i, self.n_nodes())?;
        buf.resize(self.n_nodes());
        Self::load(&mut buf.first, &self.backward, i);
        let a = &self.forward;
        recurse(buf, cfg.steps, stats, |x, base, y| a.spmv_add_into(x, base, y));
        Ok(&buf.prev)
    }

    /// Row `i` of `f_T(A)` written into `buf`. Bitwise equal to [`sample_row`].
    pub fn row_into<'b>(
        &self,
        i: usize,
        cfg: &WalkConfig,
        buf: &'b mut WalkBuffers,
        stats: &mut WalkStats,
    ) -> Result<&'b [f64]> {
        cfg.validate()?;
        check_node(i, self.n_nodes())?;
        buf.resize(self.n_nodes());
        Self::load(&mut buf.first, &self.forward, i);
        let at = &self.backward;
        recurse(buf, cfg.steps, stats, |x, base, y| at.spmv_add_into(x, base, y));
        Ok(&buf.prev)
    }

    pub fn column(&self, i: usize, cfg: &WalkConfig) -> Result<Vec<f64>> {
        let mut buf = WalkBuffers::new(self.n_nodes());
        Ok(self
            .column_into(i, cfg, &mut buf, &mut WalkStats::default())?
            .to_vec())
    }

    pub fn row(&self, i: usize, cfg: &WalkConfig) -> Result<Vec<f64>> {
        let mut buf = WalkBuffers::new(self.n_nodes());
        Ok(self
            .row_into(i, cfg, &mut buf, &mut WalkStats::default())?
            .to_vec())
    }

    /// Column `i` of the single power `Aᵏ` (not the average).
    pub fn power_column(&self, i: usize, k: usize) -> Result<Vec<f64>> {
        check_node(i, self.n_nodes())?;
        let mut x = self.backward.dense_row(i);
        let mut y = vec![0.0; x.len()];
        for _ in 1..k {
            self.forward.spmv_into(&x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }
}

/// Spectral norm `‖A‖₂` by power iteration on `AᵀA`.
pub fn spectral_norm(a: &SparseMatrix, max_iter: usize, tol: f64) -> f64 {
    let n = a.n_cols();
    if n == 0 || a.nnz() == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; a.n_rows()];
    let mut y = vec![0.0; n];
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        a.spmv_into(&x, &mut ax);
        a.spmv_transpose_into(&ax, &mut y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            break;
        }
    }
    // Both estimates are lower bounds on the largest singular value.
    a.spmv_into(&x, &mut ax);
    let rq = ax.iter().map(|v| v * v).sum::<f64>().sqrt();
    rq.max(sigma)
}

/// `trace(Aᵏ)`, summing the diagonal entry of each column of `Aᵏ`.
pub fn trace_of_power(tpm: &TransitionMatrix, k: usize) -> Result<f64> {
    let mut trace = 0.0;
    for i in 0..tpm.n_nodes() {
        trace += tpm.power_column(i, k)?[i];
    }
    Ok(trace)
}

/// Mean fraction of nonzero entries over the given columns of `f_T(A)`.
pub fn mean_column_density(
    tpm: &TransitionMatrix,
    columns: &[usize],
    cfg: &WalkConfig,
) -> Result<f64> {
    if columns.is_empty() {
        return Ok(0.0);
    }
    let n = tpm.n_nodes() as f64;
    let mut buf = WalkBuffers::new(tpm.n_nodes());
    let mut stats = WalkStats::default();
    let mut total = 0.0;
    for &c in columns {
        let col = tpm.column_into(c, cfg, &mut buf, &mut stats)?;
        total += support(col, cfg).len() as f64 / n;
    }
    Ok(total / columns.len() as f64)
}
