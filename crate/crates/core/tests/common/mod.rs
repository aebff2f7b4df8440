//! Shared generators and dense reference computations for integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homf::SparseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random non-negative `n×n` triplets; roughly `density·n²` entries.
pub fn random_triplets(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < density {
                t.push((i, j, rng.random_range(0.1..5.0)));
            }
        }
    }
    t
}

/// Dense row-stochastic matrix from triplets, written without the library:
/// empty rows become a unit self-loop.
pub fn dense_stochastic(n: usize, triplets: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for &(i, j, w) in triplets {
        a[(i, j)] += w;
    }
    for i in 0..n {
        let s: f64 = a.row(i).sum();
        if s == 0.0 {
            a[(i, i)] = 1.0;
        } else {
            for j in 0..n {
                a[(i, j)] /= s;
            }
        }
    }
    a
}

pub fn dense_of(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.n_rows(), a.n_cols());
    for (i, j, v) in a.triplets() {
        d[(i, j)] = v;
    }
    d
}

/// `(A + A² + … + Aᵀ) / T` by explicit dense products.
pub fn dense_walk_polynomial(a: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let mut power = a.clone();
    let mut sum = a.clone();
    for _ in 1..steps {
        power = &power * a;
        sum += &power;
    }
    sum / steps as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Symmetric random weights on a connected graph of `n` nodes: a path plus
/// random extra edges.
pub fn connected_symmetric(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for i in 1..n {
        let v = rng.random_range(0.2..3.0);
        w[(i - 1, i)] = v;
        w[(i, i - 1)] = v;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < extra {
                let v = rng.random_range(0.2..3.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    w
}

pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
