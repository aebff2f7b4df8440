//! Alternating block coordinate descent for
//!
//! ```text
//! min_{U,V}  ½‖P_Ω(f_T(A) − U Vᵀ)‖²_F + (λ/2)(‖U‖²_F + ‖V‖²_F)
//! ```
//!
//! where `Ω` is the nonzero support of `f_T(A)`. With `U` fixed, each row
//! `vᵢ` of `V` is an independent ridge regression against column `i` of
//! `f_T(A)` restricted to its support; the `U` update is the mirror image
//! using rows. Both factors have one row per graph node (users first, then
//! items).

mod io;
pub mod ridge;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};
use crate::walk::{support, TransitionMatrix, WalkBuffers, WalkConfig, WalkStats};

pub use io::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, write_embeddings_text,
};
pub use ridge::{solve_ridge, solve_ridge_warm};

/// Relative change of the sampled objective below which fitting stops.
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// Node embeddings: `U` and `V`, each `(m+n)×k`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingPair {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl EmbeddingPair {
    pub fn n_nodes(&self) -> usize {
        self.m + self.n
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.m + self.n;
        if self.k == 0 {
            return Err(HomfError::InvalidParameter("rank must be at least 1".into()));
        }
        for (name, mat) in [("U", &self.u), ("V", &self.v)] {
            if mat.dim() != (rows, self.k) {
                return Err(HomfError::Format(format!(
                    "{name} is {:?}, expected ({rows}, {})",
                    mat.dim(),
                    self.k
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(HomfError::NonFinite("embedding"));
            }
        }
        Ok(())
    }
}

/// Which factor an update pass rewrites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Rows of `U`, fit against rows of `f_T(A)` with `V` fixed.
    U,
    /// Rows of `V`, fit against columns of `f_T(A)` with `U` fixed.
    V,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    VThenU,
    UThenV,
}

impl UpdateOrder {
    fn sides(self) -> [Side; 2] {
        match self {
            UpdateOrder::VThenU => [Side::V, Side::U],
            UpdateOrder::UThenV => [Side::U, Side::V],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub lambda: f64,
    pub walk: WalkConfig,
    pub outer_sweeps: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub seed: u64,
    pub workers: usize,
    pub order: UpdateOrder,
    /// Columns used for the sampled objective estimate.
    pub objective_sample: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lambda: 0.1,
            walk: WalkConfig::default(),
            outer_sweeps: 20,
            cg_tol: 1e-8,
            cg_max_iter: 100,
            seed: 0,
            workers: 1,
            order: UpdateOrder::default(),
            objective_sample: 1000,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.walk.validate()?;
        let bad = |msg: String| Err(HomfError::InvalidParameter(msg));
        if self.k == 0 {
            return bad("rank k must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.outer_sweeps == 0 {
            return bad("outer_sweeps must be at least 1".into());
        }
        if !(self.cg_tol > 0.0) {
            return bad(format!("cg_tol must be positive, got {}", self.cg_tol));
        }
        if self.cg_max_iter == 0 {
            return bad("cg_max_iter must be at least 1".into());
        }
        if self.objective_sample == 0 {
            return bad("objective_sample must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-sweep record of a fit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTrace {
    /// Sampled objective: entry 0 at initialization, then one per sweep.
    pub objective: Vec<f64>,
    pub converged: bool,
    /// Factor passes in execution order.
    pub passes: Vec<Side>,
    /// Matvecs spent inside update passes (objective sampling excluded).
    pub update_matvecs: u64,
}

/// Work accounting for one update pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub matvecs: u64,
    pub cg_iterations: u64,
    pub support_entries: u64,
}

/// Seeded i.i.d. uniform `[0, 1)` entries; `U` is filled first, row-major.
pub fn init_embeddings(m: usize, n: usize, k: usize, seed: u64) -> Result<EmbeddingPair> {
    if m == 0 || n == 0 || k == 0 {
        return Err(HomfError::InvalidParameter(format!(
            "embedding dimensions must be positive, got m={m} n={n} k={k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = m + n;
    let u = Array2::from_shape_simple_fn((rows, k), || rng.random::<f64>());
    let v = Array2::from_shape_simple_fn((rows, k), || rng.random::<f64>());
    Ok(EmbeddingPair { m, n, k, u, v })
}

pub(crate) fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HomfError::InvalidParameter(format!("thread pool: {e}")))
}

/// Per-worker scratch space.
struct Scratch {
    walk: WalkBuffers,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    in_support: Vec<bool>,
}

impl Scratch {
    fn new(n: usize, k: usize) -> Self {
        Self {
            walk: WalkBuffers::new(n),
            gram: vec![0.0; k * k],
            rhs: vec![0.0; k],
            in_support: vec![false; n],
        }
    }
}

struct PassContext<'a> {
    tpm: &'a TransitionMatrix,
    fixed: &'a [f64],
    /// Upper triangle of `fixedᵀ fixed`.
    full_gram: Vec<f64>,
    current: &'a [f64],
    side: Side,
    cfg: &'a FitConfig,
    k: usize,
}

impl PassContext<'_> {
    fn solve_one(&self, i: usize, scratch: &mut Scratch) -> Result<(Vec<f64>, UpdateStats)> {
        let k = self.k;
        let n = self.tpm.n_nodes();
        let mut walk_stats = WalkStats::default();
        let target = match self.side {
            Side::V => self
                .tpm
                .column_into(i, &self.cfg.walk, &mut scratch.walk, &mut walk_stats)?,
            Side::U => self
                .tpm
                .row_into(i, &self.cfg.walk, &mut scratch.walk, &mut walk_stats)?,
        };
        let supp = support(target, &self.cfg.walk);

        // Gram of the support rows: summed directly when the support is at
        // most half the nodes, otherwise as the full Gram minus the complement.
        let gram = &mut scratch.gram;
        if 2 * supp.len() <= n {
            gram.fill(0.0);
            for &j in &supp {
                ridge::accumulate_outer(gram, &self.fixed[j * k..(j + 1) * k], 1.0);
            }
            ridge::mirror_upper(gram, k);
        } else {
            gram.copy_from_slice(&self.full_gram);
            let mask = &mut scratch.in_support;
            for &j in &supp {
                mask[j] = true;
            }
            for j in 0..n {
                if !mask[j] {
                    ridge::accumulate_outer(gram, &self.fixed[j * k..(j + 1) * k], -1.0);
                }
            }
            for &j in &supp {
                mask[j] = false;
            }
            ridge::mirror_upper(gram, k);
        }

        let rhs = &mut scratch.rhs;
        rhs.fill(0.0);
        for &j in &supp {
            let xj = target[j];
            for (r, &f) in rhs.iter_mut().zip(&self.fixed[j * k..(j + 1) * k]) {
                *r += xj * f;
            }
        }

        let warm = &self.current[i * k..(i + 1) * k];
        let out = ridge::cg_solve(
            gram,
            rhs,
            self.cfg.lambda,
            Some(warm),
            self.cfg.cg_tol,
            self.cfg.cg_max_iter,
        )?;
        let stats = UpdateStats {
            matvecs: walk_stats.matvecs,
            cg_iterations: out.iterations as u64,
            support_entries: supp.len() as u64,
        };
        Ok((out.solution, stats))
    }
}

fn full_gram(fixed: &[f64], k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for row in fixed.chunks_exact(k) {
        ridge::accumulate_outer(&mut g, row, 1.0);
    }
    // Upper triangle only; callers mirror after any complement subtraction.
    g
}

fn contiguous(a: &Array2<f64>) -> std::borrow::Cow<'_, [f64]> {
    match a.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(a.iter().copied().collect()),
    }
}

fn update_in_pool(
    pool: &rayon::ThreadPool,
    tpm: &TransitionMatrix,
    fixed: &Array2<f64>,
    side: Side,
    cfg: &FitConfig,
    current: &Array2<f64>,
) -> Result<(Array2<f64>, UpdateStats)> {
    let n = tpm.n_nodes();
    let k = cfg.k;
    for (name, mat) in [("fixed", fixed), ("current", current)] {
        if mat.dim() != (n, k) {
            return Err(HomfError::DimensionMismatch {
                op: if name == "fixed" {
                    "update_factor fixed rows"
                } else {
                    "update_factor current rows"
                },
                expected: n * k,
                actual: mat.len(),
            });
        }
    }
    let fixed_flat = contiguous(fixed);
    let current_flat = contiguous(current);
    let ctx = PassContext {
        tpm,
        fixed: &fixed_flat,
        full_gram: full_gram(&fixed_flat, k),
        current: &current_flat,
        side,
        cfg,
        k,
    };

    let rows: Vec<(Vec<f64>, UpdateStats)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map_init(|| Scratch::new(n, k), |scratch, i| ctx.solve_one(i, scratch))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Array2::zeros((n, k));
    let mut stats = UpdateStats::default();
    for (i, (row, s)) in rows.into_iter().enumerate() {
        out.row_mut(i)
            .iter_mut()
            .zip(row)
            .for_each(|(o, v)| *o = v);
        stats.matvecs += s.matvecs;
        stats.cg_iterations += s.cg_iterations;
        stats.support_entries += s.support_entries;
    }
    Ok((out, stats))
}

/// One pass over all `m+n` rows of the chosen factor. Every row is computed
/// independently and sequentially inside, so the result does not depend on
/// `cfg.workers`.
pub fn update_factor(
    tpm: &TransitionMatrix,
    fixed: &Array2<f64>,
    side: Side,
    cfg: &FitConfig,
    current: &Array2<f64>,
) -> Result<(Array2<f64>, UpdateStats)> {
    cfg.validate()?;
    let pool = build_pool(cfg.workers)?;
    update_in_pool(&pool, tpm, fixed, side, cfg, current)
}

/// Fixed, seeded sample of columns for objective estimation.
pub fn objective_sample(n_nodes: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n_nodes {
        return (0..n_nodes).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0b1e_c71e_u64);
    let mut cols = sample(&mut rng, n_nodes, size).into_vec();
    cols.sort_unstable();
    cols
}

/// Unbiased estimate of the objective from the given columns: the squared
/// error over each column's support, scaled by `(m+n)/|columns|`, plus the
/// ridge term. Exact when `columns` covers every node.
pub fn sampled_objective(
    tpm: &TransitionMatrix,
    u: &Array2<f64>,
    v: &Array2<f64>,
    lambda: f64,
    walk: &WalkConfig,
    columns: &[usize],
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64> {
    let n = tpm.n_nodes();
    let compute = || {
        columns
            .par_iter()
            .map_init(
                || WalkBuffers::new(n),
                |buf, &i| -> Result<f64> {
                    let mut stats = WalkStats::default();
                    let col = tpm.column_into(i, walk, buf, &mut stats)?;
                    let vi = v.row(i);
                    let mut loss = 0.0;
                    for j in support(col, walk) {
                        let pred: f64 = u.row(j).dot(&vi);
                        let d = col[j] - pred;
                        loss += d * d;
                    }
                    Ok(0.5 * loss)
                },
            )
            .collect::<Result<Vec<f64>>>()
    };
    let losses = match pool {
        Some(p) => p.install(compute)?,
        None => compute()?,
    };
    let data: f64 = losses.iter().sum();
    let scale = if columns.is_empty() {
        0.0
    } else {
        n as f64 / columns.len() as f64
    };
    let reg = 0.5 * lambda * (frob2(u.view()) + frob2(v.view()));
    Ok(scale * data + reg)
}

fn frob2(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Alternating fit from uniform random initialization. Stops after
/// `outer_sweeps` or when the sampled objective changes by less than
/// [`CONVERGENCE_TOL`] relative to the previous sweep.
pub fn fit(
    tpm: &TransitionMatrix,
    m: usize,
    n: usize,
    cfg: &FitConfig,
) -> Result<(EmbeddingPair, ObjectiveTrace)> {
    cfg.validate()?;
    if m + n != tpm.n_nodes() {
        return Err(HomfError::DimensionMismatch {
            op: "fit node count",
            expected: tpm.n_nodes(),
            actual: m + n,
        });
    }
    let mut emb = init_embeddings(m, n, cfg.k, cfg.seed)?;
    let trace = fit_from(tpm, &mut emb, cfg)?;
    Ok((emb, trace))
}

/// Continues fitting from the given embeddings.
pub fn fit_from(
    tpm: &TransitionMatrix,
    emb: &mut EmbeddingPair,
    cfg: &FitConfig,
) -> Result<ObjectiveTrace> {
    cfg.validate()?;
    emb.validate()?;
    let pool = build_pool(cfg.workers)?;
    let sample_cols = objective_sample(tpm.n_nodes(), cfg.objective_sample, cfg.seed);
    let mut trace = ObjectiveTrace::default();
    let mut prev = sampled_objective(
        tpm,
        &emb.u,
        &emb.v,
        cfg.lambda,
        &cfg.walk,
        &sample_cols,
        Some(&pool),
    )?;
    trace.objective.push(prev);

    for sweep in 0..cfg.outer_sweeps {
        for side in cfg.order.sides() {
            let (fixed, current) = match side {
                Side::V => (&emb.u, &emb.v),
                Side::U => (&emb.v, &emb.u),
            };
            let (next, stats) = update_in_pool(&pool, tpm, fixed, side, cfg, current)?;
            match side {
                Side::V => emb.v = next,
                Side::U => emb.u = next,
            }
            trace.passes.push(side);
            trace.update_matvecs += stats.matvecs;
        }
        let obj = sampled_objective(
            tpm,
            &emb.u,
            &emb.v,
            cfg.lambda,
            &cfg.walk,
            &sample_cols,
            Some(&pool),
        )?;
        if !obj.is_finite() {
            return Err(HomfError::NonFinite("objective"));
        }
        trace.objective.push(obj);
        let rel = (prev - obj).abs() / prev.abs().max(f64::MIN_POSITIVE);
        log::debug!("sweep {sweep}: objective {obj:.6e} (rel change {rel:.3e})");
        prev = obj;
        if rel < CONVERGENCE_TOL {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

fn check_user_item(e: &EmbeddingPair, user: usize, item: usize) -> Result<()> {
    if user >= e.m {
        return Err(HomfError::IndexOutOfRange {
            what: "user",
            index: user,
            size: e.m,
        });
    }
    if item >= e.n {
        return Err(HomfError::IndexOutOfRange {
            what: "item",
            index: item,
            size: e.n,
        });
    }
    Ok(())
}

/// Score of `item` for `user`: `U[user] · V[m + item]`.
pub fn predict(e: &EmbeddingPair, user: usize, item: usize) -> Result<f64> {
    check_user_item(e, user, item)?;
    Ok(e.u.row(user).dot(&e.v.row(e.m + item)))
}

/// Average of `U[user]·V[item]` and `U[item]·V[user]`.
pub fn predict_symmetric(e: &EmbeddingPair, user: usize, item: usize) -> Result<f64> {
    check_user_item(e, user, item)?;
    let j = e.m + item;
    let forward = e.u.row(user).dot(&e.v.row(j));
    let backward = e.u.row(j).dot(&e.v.row(user));
    Ok(0.5 * (forward + backward))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborPool {
    Users,
    Items,
    All,
}

impl std::str::FromStr for NeighborPool {
    type Err = HomfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "users" | "user" | "rows" => Ok(NeighborPool::Users),
            "items" | "item" | "columns" => Ok(NeighborPool::Items),
            "all" => Ok(NeighborPool::All),
            other => Err(HomfError::Config(format!("unknown neighbor pool {other:?}"))),
        }
    }
}

/// The `count` rows of `U` closest to row `node` in Euclidean distance,
/// restricted to `pool` and excluding `node`; ties go to the smaller index.
pub fn neighbors(
    e: &EmbeddingPair,
    node: usize,
    count: usize,
    pool: NeighborPool,
) -> Result<Vec<(usize, f64)>> {
    let total = e.n_nodes();
    if node >= total {
        return Err(HomfError::IndexOutOfRange {
            what: "node",
            index: node,
            size: total,
        });
    }
    let range = match pool {
        NeighborPool::Users => 0..e.m,
        NeighborPool::Items => e.m..total,
        NeighborPool::All => 0..total,
    };
    let q = e.u.row(node);
    let mut dists: Vec<(usize, f64)> = range
        .filter(|&j| j != node)
        .map(|j| {
            let d2: f64 = e
                .u
                .row(j)
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (j, d2.sqrt())
        })
        .collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(count);
    Ok(dists)
}
