//! Joint user/item graph construction.
//!
//! Users occupy nodes `0..m`, items `m..m+n`. The adjacency has the block form
//!
//! ```text
//! [ α·g1(Gr)        (1−α)·g2(R) ]
//! [ (1−α)·g2(R)ᵀ    α·g3(Gc)    ]
//! ```
//!
//! where each `g` acts only on stored entries. The transition matrix is its
//! row-normalized version.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};
use crate::sparse::SparseMatrix;

const EXP_GUARD: f64 = 700.0;

/// Non-negative, non-decreasing map from a rating or edge weight to an edge weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightFn {
    Exponential,
    Linear(f64),
    Step,
}

impl Default for WeightFn {
    fn default() -> Self {
        WeightFn::Exponential
    }
}

impl WeightFn {
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            WeightFn::Exponential => {
                if !(x.abs() <= EXP_GUARD) {
                    return Err(HomfError::ExpOverflow { value: x });
                }
                Ok(x.exp())
            }
            WeightFn::Linear(c) => Ok(c * x),
            WeightFn::Step => Ok(if x > 0.0 { 1.0 } else { 0.0 }),
        }
    }
}

impl fmt::Display for WeightFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFn::Exponential => f.write_str("exp"),
            WeightFn::Linear(c) => write!(f, "linear:{c}"),
            WeightFn::Step => f.write_str("step"),
        }
    }
}

impl FromStr for WeightFn {
    type Err = HomfError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "exp" | "exponential" => Ok(WeightFn::Exponential),
            "step" => Ok(WeightFn::Step),
            "linear" => Ok(WeightFn::Linear(1.0)),
            other => {
                if let Some(c) = other.strip_prefix("linear:") {
                    let c: f64 = c.parse().map_err(|_| {
                        HomfError::Config(format!("bad linear weight constant in {other:?}"))
                    })?;
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(HomfError::Config(format!(
                            "linear weight constant must be positive, got {c}"
                        )));
                    }
                    Ok(WeightFn::Linear(c))
                } else {
                    Err(HomfError::Config(format!("unknown weight function {other:?}")))
                }
            }
        }
    }
}

impl TryFrom<String> for WeightFn {
    type Error = HomfError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightFn> for String {
    fn from(w: WeightFn) -> String {
        w.to_string()
    }
}

/// Recipe for the joint adjacency: sizes, side-information weight and the
/// three weighting functions (row side graph, ratings, column side graph).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub g1: WeightFn,
    pub g2: WeightFn,
    pub g3: WeightFn,
}

impl GraphSpec {
    /// Ratings only, `α = 0`.
    pub fn ratings_only(m: usize, n: usize, g2: WeightFn) -> Self {
        Self {
            m,
            n,
            alpha: 0.0,
            g1: g2,
            g2,
            g3: g2,
        }
    }

    /// Same weighting everywhere, `g3 = g1`.
    pub fn with_side(m: usize, n: usize, alpha: f64, g1: WeightFn, g2: WeightFn) -> Self {
        Self {
            m,
            n,
            alpha,
            g1,
            g2,
            g3: g1,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.m + self.n
    }

    fn validate(&self, has_side: bool) -> Result<()> {
        if has_side {
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                return Err(HomfError::InvalidParameter(format!(
                    "alpha must lie in (0, 1) when a side graph is given, got {}",
                    self.alpha
                )));
            }
        } else if self.alpha != 0.0 {
            return Err(HomfError::InvalidParameter(format!(
                "alpha = {} but no side graph was supplied",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn check_shape(
    what: &'static str,
    mat: &SparseMatrix,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if mat.n_rows() != rows {
        return Err(HomfError::DimensionMismatch {
            op: what,
            expected: rows,
            actual: mat.n_rows(),
        });
    }
    if mat.n_cols() != cols {
        return Err(HomfError::DimensionMismatch {
            op: what,
            expected: cols,
            actual: mat.n_cols(),
        });
    }
    Ok(())
}

fn weighted(g: WeightFn, scale: f64, row: usize, col: usize, v: f64) -> Result<f64> {
    let w = scale * g.apply(v)?;
    if w < 0.0 || !w.is_finite() {
        return Err(HomfError::NegativeWeight {
            row,
            col,
            value: w,
        });
    }
    Ok(w)
}

/// Joint `(m+n)×(m+n)` adjacency.
pub fn build_adjacency(
    ratings: &SparseMatrix,
    row_graph: Option<&SparseMatrix>,
    col_graph: Option<&SparseMatrix>,
    spec: &GraphSpec,
) -> Result<SparseMatrix> {
    let (m, n) = (spec.m, spec.n);
    check_shape("ratings", ratings, m, n)?;
    if let Some(gr) = row_graph {
        check_shape("row side graph", gr, m, m)?;
        if let Some((row, col)) = gr.asymmetry() {
            return Err(HomfError::NotSymmetric {
                which: "row",
                row,
                col,
            });
        }
    }
    if let Some(gc) = col_graph {
        check_shape("column side graph", gc, n, n)?;
        if let Some((row, col)) = gc.asymmetry() {
            return Err(HomfError::NotSymmetric {
                which: "column",
                row,
                col,
            });
        }
    }
    spec.validate(row_graph.is_some() || col_graph.is_some())?;

    let alpha = spec.alpha;
    let rating_scale = 1.0 - alpha;
    let capacity = 2 * ratings.nnz()
        + row_graph.map_or(0, SparseMatrix::nnz)
        + col_graph.map_or(0, SparseMatrix::nnz);
    let mut entries = Vec::with_capacity(capacity);

    if let Some(gr) = row_graph {
        for (i, j, v) in gr.triplets() {
            let w = weighted(spec.g1, alpha, i, j, v)?;
            if w != 0.0 {
                entries.push((i, j, w));
            }
        }
    }
    for (i, j, v) in ratings.triplets() {
        let w = weighted(spec.g2, rating_scale, i, m + j, v)?;
        if w != 0.0 {
            entries.push((i, m + j, w));
            entries.push((m + j, i, w));
        }
    }
    if let Some(gc) = col_graph {
        for (i, j, v) in gc.triplets() {
            let w = weighted(spec.g3, alpha, m + i, m + j, v)?;
            if w != 0.0 {
                entries.push((m + i, m + j, w));
            }
        }
    }
    SparseMatrix::from_triplets(&entries, m + n, m + n)
}

/// Row-stochastic transition matrix of the joint graph.
pub fn build_tpm(
    ratings: &SparseMatrix,
    row_graph: Option<&SparseMatrix>,
    col_graph: Option<&SparseMatrix>,
    spec: &GraphSpec,
) -> Result<SparseMatrix> {
    build_adjacency(ratings, row_graph, col_graph, spec)?.row_normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two_ratings() -> SparseMatrix {
        SparseMatrix::from_triplets(&[(0, 0, 2.0), (0, 1, 4.0), (1, 1, 3.0)], 2, 2).unwrap()
    }

    #[test]
    fn adjacency_without_side_info() {
        let spec = GraphSpec::ratings_only(2, 2, WeightFn::Exponential);
        let g = build_adjacency(&two_by_two_ratings(), None, None, &spec).unwrap();
        let e = f64::exp;
        assert_eq!(g.get(0, 2), e(2.0));
        assert_eq!(g.get(0, 3), e(4.0));
        assert_eq!(g.get(1, 3), e(3.0));
        assert_eq!(g.get(2, 0), e(2.0));
        assert_eq!(g.get(3, 1), e(3.0));
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            assert_eq!(g.get(i, j), 0.0);
        }
        assert!(g.is_symmetric());
        assert_eq!(g.nnz(), 6);
    }

    #[test]
    fn adjacency_with_column_graph() {
        let alpha = 0.3;
        let gc = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let spec = GraphSpec {
            alpha,
            ..GraphSpec::ratings_only(2, 2, WeightFn::Exponential)
        };
        let g = build_adjacency(&two_by_two_ratings(), None, Some(&gc), &spec).unwrap();
        assert_eq!(g.get(2, 3), alpha * 1f64.exp());
        assert_eq!(g.get(3, 2), alpha * 1f64.exp());
        assert_eq!(g.get(0, 2), (1.0 - alpha) * 2f64.exp());
        assert_eq!(g.get(2, 2), 0.0);
    }

    #[test]
    fn step_weighting_of_single_rating() {
        let r = SparseMatrix::from_dense(&[vec![1.0]]).unwrap();
        let g = build_adjacency(&r, None, None, &GraphSpec::ratings_only(1, 1, WeightFn::Step))
            .unwrap();
        assert_eq!(g.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn zero_ratings_follow_weight_fn() {
        let r = SparseMatrix::from_triplets(&[(0, 0, 0.0), (0, 1, 2.0)], 1, 2).unwrap();
        let exp = build_adjacency(&r, None, None, &GraphSpec::ratings_only(1, 2, WeightFn::Exponential))
            .unwrap();
        assert_eq!(exp.get(0, 1), 1.0);
        let step = build_adjacency(&r, None, None, &GraphSpec::ratings_only(1, 2, WeightFn::Step))
            .unwrap();
        assert_eq!(step.get(0, 1), 0.0);
        assert_eq!(step.nnz(), 2);
    }

    #[test]
    fn tpm_matches_hand_computation() {
        let a = build_tpm(
            &two_by_two_ratings(),
            None,
            None,
            &GraphSpec::ratings_only(2, 2, WeightFn::Exponential),
        )
        .unwrap();
        assert_eq!(a.dense_row(1), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.dense_row(2), vec![1.0, 0.0, 0.0, 0.0]);
        let (e2, e4) = (2f64.exp(), 4f64.exp());
        assert!((a.get(0, 2) - e2 / (e2 + e4)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let r = two_by_two_ratings();
        let asym = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let mut spec = GraphSpec::ratings_only(2, 2, WeightFn::Exponential);
        spec.alpha = 0.5;
        assert!(matches!(
            build_adjacency(&r, None, Some(&asym), &spec),
            Err(HomfError::NotSymmetric { which: "column", .. })
        ));
        assert!(matches!(
            build_adjacency(&r, None, None, &spec),
            Err(HomfError::InvalidParameter(_))
        ));
        let big = SparseMatrix::from_dense(&[vec![800.0]]).unwrap();
        assert!(matches!(
            build_adjacency(&big, None, None, &GraphSpec::ratings_only(1, 1, WeightFn::Exponential)),
            Err(HomfError::ExpOverflow { .. })
        ));
        let neg = SparseMatrix::from_dense(&[vec![-2.0]]).unwrap();
        assert!(build_adjacency(&neg, None, None, &GraphSpec::ratings_only(1, 1, WeightFn::Linear(1.0)))
            .is_err());
    }

    #[test]
    fn weight_fn_parsing() {
        assert_eq!("exp".parse::<WeightFn>().unwrap(), WeightFn::Exponential);
        assert_eq!("linear".parse::<WeightFn>().unwrap(), WeightFn::Linear(1.0));
        assert_eq!("linear:2.5".parse::<WeightFn>().unwrap(), WeightFn::Linear(2.5));
        assert_eq!("Step".parse::<WeightFn>().unwrap(), WeightFn::Step);
        assert!("cubic".parse::<WeightFn>().is_err());
        for w in [WeightFn::Exponential, WeightFn::Linear(3.0), WeightFn::Step] {
            assert_eq!(w.to_string().parse::<WeightFn>().unwrap(), w);
        }
    }

    fn arb_weight() -> impl Strategy<Value = WeightFn> {
        prop_oneof![
            Just(WeightFn::Exponential),
            (0.1f64..10.0).prop_map(WeightFn::Linear),
            Just(WeightFn::Step),
        ]
    }

    proptest! {
        #[test]
        fn weight_fns_are_monotone(w in arb_weight(), x in -50.0f64..50.0, d in 0.0f64..50.0) {
            let (a, b) = (w.apply(x).unwrap(), w.apply(x + d).unwrap());
            prop_assert!(a <= b);
            if x >= 0.0 {
                prop_assert!(a >= 0.0);
            }
        }

        #[test]
        fn nnz_and_symmetry_accounting(
            ratings in proptest::collection::vec((0usize..6, 0usize..5, 1u8..6), 1..25),
            side in proptest::collection::vec((0usize..6, 0usize..6), 0..10),
            alpha in 0.05f64..0.95,
        ) {
            let r: Vec<_> = ratings.iter().map(|&(i, j, v)| (i, j, v as f64)).collect();
            let r = SparseMatrix::from_triplets(&r, 6, 5).unwrap();
            // keep only the summed positive entries (duplicates collapse)
            let mut sym = Vec::new();
            for &(a, b) in &side {
                if a != b {
                    sym.push((a, b, 1.0));
                    sym.push((b, a, 1.0));
                }
            }
            let gr = SparseMatrix::from_triplets(&sym, 6, 6).unwrap();
            let (gr_opt, spec) = if gr.nnz() > 0 {
                (Some(&gr), GraphSpec::with_side(6, 5, alpha, WeightFn::Exponential, WeightFn::Exponential))
            } else {
                (None, GraphSpec::ratings_only(6, 5, WeightFn::Exponential))
            };
            let g = build_adjacency(&r, gr_opt, None, &spec).unwrap();
            prop_assert_eq!(g.nnz(), 2 * r.nnz() + gr_opt.map_or(0, |g| g.nnz()));
            prop_assert!(g.is_symmetric());
            if gr_opt.is_none() {
                for i in 0..6 {
                    for j in 0..6 {
                        prop_assert_eq!(g.get(i, j), 0.0);
                    }
                }
            }
            let a = g.row_normalize().unwrap();
            for s in a.row_sums() {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}
