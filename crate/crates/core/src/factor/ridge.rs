//! Ridge subproblems solved by conjugate gradients on the `k×k` normal
//! equations `(XᵀX + λI) v = Xᵀy`.

use ndarray::ArrayView2;

use crate::error::{HomfError, Result};

/// Result of one CG solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖b − Hv‖` recomputed from scratch at exit.
    pub residual_norm: f64,
    pub converged: bool,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = (G + λI) p` for a dense row-major `k×k` Gram matrix `G`.
#[inline]
fn hess_vec(gram: &[f64], lambda: f64, p: &[f64], out: &mut [f64]) {
    let k = p.len();
    for (a, o) in out.iter_mut().enumerate() {
        *o = dot(&gram[a * k..(a + 1) * k], p) + lambda * p[a];
    }
}

fn true_residual(gram: &[f64], lambda: f64, b: &[f64], v: &[f64], r: &mut [f64]) -> f64 {
    hess_vec(gram, lambda, v, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    dot(r, r).sqrt()
}

/// Solves `(G + λI) v = b` by conjugate gradients, starting from `init`
/// (zero when `None`). Stops once `‖b − Hv‖ ≤ tol·‖b‖` or after `max_iter`
/// iterations.
pub fn cg_solve(
    gram: &[f64],
    rhs: &[f64],
    lambda: f64,
    init: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let k = rhs.len();
    if gram.len() != k * k {
        return Err(HomfError::DimensionMismatch {
            op: "cg_solve gram",
            expected: k * k,
            actual: gram.len(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(HomfError::InvalidParameter(format!(
            "ridge weight must be positive, got {lambda}"
        )));
    }
    if !(tol > 0.0) {
        return Err(HomfError::InvalidParameter(format!(
            "cg tolerance must be positive, got {tol}"
        )));
    }
    if gram.iter().chain(rhs).any(|v| !v.is_finite()) {
        return Err(HomfError::NonFinite("solve_ridge"));
    }
    let mut v = match init {
        Some(x) if x.len() == k && x.iter().all(|v| v.is_finite()) => x.to_vec(),
        _ => vec![0.0; k],
    };

    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        // H is positive definite, so the unique solution is zero.
        return Ok(CgOutcome {
            solution: vec![0.0; k],
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let target = tol * b_norm;

    let mut r = vec![0.0; k];
    let mut hp = vec![0.0; k];
    let mut res = true_residual(gram, lambda, rhs, &v, &mut r);
    let mut p = r.clone();
    let mut rr = res * res;
    let mut iterations = 0;
    while res > target && iterations < max_iter {
        hess_vec(gram, lambda, &p, &mut hp);
        let curvature = dot(&p, &hp);
        if !(curvature > 0.0) {
            break;
        }
        let step = rr / curvature;
        for ((vi, pi), (ri, hi)) in v.iter_mut().zip(&p).zip(r.iter_mut().zip(&hp)) {
            *vi += step * pi;
            *ri -= step * hi;
        }
        iterations += 1;
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            // The recurrence drifts; confirm against the true residual and
            // restart from it when the two disagree.
            res = true_residual(gram, lambda, rhs, &v, &mut r);
            if res <= target {
                break;
            }
            p.copy_from_slice(&r);
            rr = res * res;
            continue;
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
        res = rr.sqrt();
    }
    let residual_norm = true_residual(gram, lambda, rhs, &v, &mut r);
    Ok(CgOutcome {
        solution: v,
        iterations,
        residual_norm,
        converged: residual_norm <= target,
    })
}

/// Row-major `XᵀX` for a dense `s×k` design.
pub fn gram_matrix(x: ArrayView2<'_, f64>) -> Vec<f64> {
    let k = x.ncols();
    let mut g = vec![0.0; k * k];
    let mut buf = vec![0.0; k];
    for row in x.rows() {
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            *b = v;
        }
        accumulate_outer(&mut g, &buf, 1.0);
    }
    mirror_upper(&mut g, k);
    g
}

/// `G += sign · f fᵀ`, upper triangle then mirrored.
#[inline]
pub(crate) fn accumulate_outer(g: &mut [f64], f: &[f64], sign: f64) {
    let k = f.len();
    for a in 0..k {
        let fa = sign * f[a];
        let row = &mut g[a * k..(a + 1) * k];
        for b in a..k {
            row[b] += fa * f[b];
        }
    }
}

#[inline]
pub(crate) fn mirror_upper(g: &mut [f64], k: usize) {
    for a in 0..k {
        for b in 0..a {
            g[a * k + b] = g[b * k + a];
        }
    }
}

/// Approximately solves `(XᵀX + λI) v = Xᵀy`, the minimizer of
/// `½‖y − Xv‖² + (λ/2)‖v‖²`. With `s = 0` rows the answer is zero.
pub fn solve_ridge(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    lambda: f64,
    cg_tol: f64,
    cg_max_iter: usize,
) -> Result<Vec<f64>> {
    solve_ridge_warm(x, y, lambda, cg_tol, cg_max_iter, None)
}

/// [`solve_ridge`] with a warm start.
pub fn solve_ridge_warm(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    lambda: f64,
    cg_tol: f64,
    cg_max_iter: usize,
    init: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let (s, k) = x.dim();
    if y.len() != s {
        return Err(HomfError::DimensionMismatch {
            op: "solve_ridge",
            expected: s,
            actual: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(HomfError::NonFinite("solve_ridge"));
    }
    let gram = gram_matrix(x);
    let mut rhs = vec![0.0; k];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        for (r, &xv) in rhs.iter_mut().zip(row.iter()) {
            *r += yi * xv;
        }
    }
    Ok(cg_solve(&gram, &rhs, lambda, init, cg_tol, cg_max_iter)?.solution)
}

/// `½‖y − Xv‖² + (λ/2)‖v‖²`.
pub fn ridge_objective(x: ArrayView2<'_, f64>, y: &[f64], v: &[f64], lambda: f64) -> f64 {
    let fit: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let r = yi - row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            r * r
        })
        .sum();
    0.5 * fit + 0.5 * lambda * dot(v, v)
}

/// Gradient of [`ridge_objective`]: `Xᵀ(Xv − y) + λv`.
pub fn ridge_gradient(x: ArrayView2<'_, f64>, y: &[f64], v: &[f64], lambda: f64) -> Vec<f64> {
    let mut g: Vec<f64> = v.iter().map(|vi| lambda * vi).collect();
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let r = row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - yi;
        for (gi, &xv) in g.iter_mut().zip(row.iter()) {
            *gi += r * xv;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn identity_design() {
        let x = Array2::<f64>::eye(2);
        let v = solve_ridge(x.view(), &[1.0, 1.0], 1.0, 1e-12, 100).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12);

        let v = solve_ridge(x.view(), &[3.0, -7.0], 1e-12, 1e-14, 100).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-9 && (v[1] + 7.0).abs() < 1e-9);
    }

    #[test]
    fn empty_design_gives_zero() {
        let x = Array2::<f64>::zeros((0, 3));
        assert_eq!(solve_ridge(x.view(), &[], 0.1, 1e-8, 100).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn small_system_matches_hand_solution() {
        // XᵀX = [[2,1],[1,2]], Xᵀy = [3,3], λ = 1 → 3v = 3 per component.
        let x = array![[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let v = solve_ridge(x.view(), &[1.0, 2.0, 1.0], 1.0, 1e-14, 50).unwrap();
        assert!((v[0] - 0.75).abs() < 1e-12, "{v:?}");
        assert!((v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn warm_start_at_solution_takes_no_iterations() {
        let gram = vec![2.0, 1.0, 1.0, 2.0];
        let out = cg_solve(&gram, &[3.0, 3.0], 1.0, Some(&[0.75, 0.75]), 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn rejects_non_finite_and_bad_lambda() {
        let x = array![[1.0, f64::NAN]];
        assert!(matches!(
            solve_ridge(x.view(), &[1.0], 1.0, 1e-8, 10),
            Err(HomfError::NonFinite(_))
        ));
        let x = array![[1.0, 0.0]];
        assert!(solve_ridge(x.view(), &[f64::INFINITY], 1.0, 1e-8, 10).is_err());
        assert!(solve_ridge(x.view(), &[1.0], 0.0, 1e-8, 10).is_err());
        assert!(solve_ridge(x.view(), &[1.0, 2.0], 1.0, 1e-8, 10).is_err());
    }
}
