mod common;

use nalgebra::DMatrix;
use rand::Rng;

use common::*;
use homf::factor::{self, fit, neighbors, NeighborPool, UpdateOrder};
use homf::graph::{build_tpm, GraphSpec, WeightFn};
use homf::walk::{TransitionMatrix, WalkConfig};
use homf::{FitConfig, Side, SparseMatrix};

/// Two disconnected complete bipartite blocks: at T = 1 the transition
/// matrix has rank 2 on its support, so a k = 2 fit with tiny λ should
/// drive the objective close to zero.
#[test]
fn recovers_low_rank_block_structure() {
    let (m, n) = (6, 6);
    let mut trip = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if (u < 3) == (i < 3) {
                trip.push((u, i, 1.0));
            }
        }
    }
    let r = SparseMatrix::from_triplets(&trip, m, n).unwrap();
    let a = build_tpm(&r, None, None, &GraphSpec::ratings_only(m, n, WeightFn::Linear(1.0))).unwrap();
    let tpm = TransitionMatrix::new(a).unwrap();
    let cfg = FitConfig {
        k: 4,
        lambda: 1e-9,
        walk: WalkConfig::new(1),
        outer_sweeps: 200,
        cg_tol: 1e-14,
        cg_max_iter: 200,
        workers: 1,
        ..FitConfig::default()
    };
    let (_, trace) = fit(&tpm, m, n, &cfg).unwrap();
    let last = *trace.objective.last().unwrap();
    assert!(last < 1e-6, "objective {last:e} after {} sweeps", trace.objective.len() - 1);
}

#[test]
fn trace_records_order_and_work() {
    let mut rng = rng(21);
    let (m, n) = (20, 15);
    let mut trip = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.random::<f64>() < 0.2 {
                trip.push((u, i, rng.random_range(1..=5) as f64));
            }
        }
    }
    let r = SparseMatrix::from_triplets(&trip, m, n).unwrap();
    let a = build_tpm(&r, None, None, &GraphSpec::ratings_only(m, n, WeightFn::Exponential)).unwrap();
    let tpm = TransitionMatrix::new(a).unwrap();
    for order in [UpdateOrder::VThenU, UpdateOrder::UThenV] {
        let cfg = FitConfig {
            k: 3,
            walk: WalkConfig::new(3),
            outer_sweeps: 3,
            order,
            workers: 1,
            ..FitConfig::default()
        };
        let (_, trace) = fit(&tpm, m, n, &cfg).unwrap();
        let sweeps = trace.objective.len() - 1;
        assert!(sweeps >= 1 && sweeps <= 3);
        assert_eq!(trace.passes.len(), 2 * sweeps);
        let first = match order {
            UpdateOrder::VThenU => Side::V,
            UpdateOrder::UThenV => Side::U,
        };
        assert_eq!(trace.passes[0], first);
        assert_eq!(trace.update_matvecs, (2 * sweeps * 2 * (m + n)) as u64);
        assert!(trace.objective.iter().all(|o| o.is_finite()));
    }
}

#[test]
fn sampled_objective_is_exact_when_all_columns_used() {
    let mut rng = rng(22);
    let n = 30;
    let trip = random_triplets(&mut rng, n, 0.15);
    let a = SparseMatrix::from_triplets(&trip, n, n).unwrap().row_normalize().unwrap();
    let dense = dense_of(&a);
    let tpm = TransitionMatrix::new(a).unwrap();
    let e = factor::init_embeddings(10, 20, 3, 4).unwrap();
    let walk = WalkConfig::new(3);
    let cols: Vec<usize> = (0..n).collect();
    let got = factor::sampled_objective(&tpm, &e.u, &e.v, 0.3, &walk, &cols, None).unwrap();
    let f = dense_walk_polynomial(&dense, 3);
    let u = DMatrix::from_fn(n, 3, |i, j| e.u[[i, j]]);
    let v = DMatrix::from_fn(n, 3, |i, j| e.v[[i, j]]);
    let pred = &u * v.transpose();
    let mut want = 0.0;
    for j in 0..n {
        for i in 0..n {
            if f[(j, i)] != 0.0 {
                want += 0.5 * (f[(j, i)] - pred[(j, i)]).powi(2);
            }
        }
    }
    want += 0.15 * (u.norm_squared() + v.norm_squared());
    assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
}

#[test]
fn neighbors_match_brute_force() {
    let e = factor::init_embeddings(25, 35, 4, 9).unwrap();
    for node in [0, 10, 24, 25, 59] {
        for pool in [NeighborPool::Users, NeighborPool::Items, NeighborPool::All] {
            let range: Vec<usize> = match pool {
                NeighborPool::Users => (0..25).collect(),
                NeighborPool::Items => (25..60).collect(),
                NeighborPool::All => (0..60).collect(),
            };
            let mut want: Vec<(usize, f64)> = range
                .into_iter()
                .filter(|&j| j != node)
                .map(|j| {
                    let d: f64 = (0..4).map(|c| (e.u[[j, c]] - e.u[[node, c]]).powi(2)).sum();
                    (j, d.sqrt())
                })
                .collect();
            want.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            want.truncate(5);
            assert_eq!(neighbors(&e, node, 5, pool).unwrap(), want);
        }
    }
    assert!(neighbors(&e, 60, 5, NeighborPool::All).is_err());
}
