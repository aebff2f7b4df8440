//! Planted-cluster rating data.
//!
//! Users and items are split into `clusters` groups. A user is more likely to
//! have rated items of their own group, and rates them highly; ratings
//! outside the group are mostly low. Recovering the grouping from a very
//! sparse sample needs multi-hop information, which is what the generator
//! is for.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RatingDataset, ValueKind};
use crate::error::{HomfError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub m: usize,
    pub n: usize,
    pub clusters: usize,
    /// Expected fraction of observed cells.
    pub density: f64,
    /// Observation odds of an in-cluster cell relative to an out-of-cluster one.
    pub affinity: f64,
    /// Probability that a rating ignores the cluster structure.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            m: 1000,
            n: 1000,
            clusters: 10,
            density: 0.01,
            affinity: 4.0,
            noise: 0.1,
            seed: 17,
        }
    }
}

pub fn user_cluster(spec: &PlantedSpec, user: usize) -> usize {
    user % spec.clusters
}

pub fn item_cluster(spec: &PlantedSpec, item: usize) -> usize {
    item % spec.clusters
}

/// Draws a dataset with star ratings 1–5; in-cluster ratings are mostly 5.
pub fn planted_clusters(spec: &PlantedSpec) -> Result<RatingDataset> {
    if spec.m == 0 || spec.n == 0 || spec.clusters == 0 {
        return Err(HomfError::InvalidParameter("planted dataset needs positive sizes".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) || !(spec.affinity >= 1.0) {
        return Err(HomfError::InvalidParameter(format!(
            "density must be in (0, 1] and affinity ≥ 1, got {} and {}",
            spec.density, spec.affinity
        )));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(HomfError::InvalidParameter(format!("noise must be in [0, 1], got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let in_share = 1.0 / spec.clusters as f64;
    let p_out = spec.density / (spec.affinity * in_share + (1.0 - in_share));
    let p_in = (spec.affinity * p_out).min(1.0);

    let mut triplets = Vec::new();
    for u in 0..spec.m {
        let cu = user_cluster(spec, u);
        for i in 0..spec.n {
            let same = item_cluster(spec, i) == cu;
            let p = if same { p_in } else { p_out };
            if rng.random::<f64>() >= p {
                continue;
            }
            let rating = if rng.random::<f64>() < spec.noise {
                rng.random_range(1..=5) as f64
            } else if same {
                if rng.random::<f64>() < 0.85 { 5.0 } else { 4.0 }
            } else {
                rng.random_range(1..=3) as f64
            };
            triplets.push((u, i, rating));
        }
    }
    RatingDataset::from_triplets(spec.m, spec.n, &triplets, ValueKind::Star)
}

/// Ratings as `user::item::rating` lines with 1-based ids.
pub fn to_double_colon(ds: &RatingDataset) -> String {
    let mut out = String::with_capacity(ds.nnz() * 12);
    for r in &ds.ratings {
        out.push_str(&format!("{}::{}::{}\n", r.row + 1, r.col + 1, r.value));
    }
    out
}
