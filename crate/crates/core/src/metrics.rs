//! Top-K ranking metrics averaged over users, and AUC.
//!
//! Each user's test items are ranked by predicted score, descending, with
//! ties broken by ascending item index. Users without any relevant test item
//! are skipped from every average and counted in the report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};
use crate::fsutil::write_atomic;

/// One user's held-out items with ground truth and predicted scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTestSet {
    pub user: usize,
    pub items: Vec<usize>,
    pub relevance: Vec<bool>,
    pub scores: Vec<f64>,
}

impl UserTestSet {
    pub fn new(user: usize, items: Vec<usize>, relevance: Vec<bool>, scores: Vec<f64>) -> Result<Self> {
        if items.is_empty() {
            return Err(HomfError::EmptyInput(format!("test set of user {user}")));
        }
        if relevance.len() != items.len() || scores.len() != items.len() {
            return Err(HomfError::DimensionMismatch {
                op: "user test set",
                expected: items.len(),
                actual: relevance.len().min(scores.len()),
            });
        }
        Ok(Self {
            user,
            items,
            relevance,
            scores,
        })
    }

    pub fn n_relevant(&self) -> usize {
        self.relevance.iter().filter(|&&r| r).count()
    }

    /// Relevance flags in ranked order.
    pub fn ranked_relevance(&self) -> Vec<bool> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then(self.items[a].cmp(&self.items[b]))
        });
        order.into_iter().map(|p| self.relevance[p]).collect()
    }
}

fn hits_in_top(ranked: &[bool], k: usize) -> usize {
    ranked.iter().take(k).filter(|&&r| r).count()
}

/// `(precision@K, recall@K)`, or `None` when the user has no relevant item.
pub fn precision_recall_at_k(u: &UserTestSet, k: usize) -> Option<(f64, f64)> {
    let relevant = u.n_relevant();
    if relevant == 0 || k == 0 {
        return None;
    }
    let hits = hits_in_top(&u.ranked_relevance(), k) as f64;
    Some((hits / k as f64, hits / relevant as f64))
}

/// Sum of precision@j over relevant ranks `j ≤ K`, divided by `min(ℐ_u, K)`.
pub fn average_precision_at_k(u: &UserTestSet, k: usize) -> Option<f64> {
    let relevant = u.n_relevant();
    if relevant == 0 || k == 0 {
        return None;
    }
    let ranked = u.ranked_relevance();
    let mut hits = 0usize;
    let mut total = 0.0;
    for (j, &rel) in ranked.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            total += hits as f64 / (j + 1) as f64;
        }
    }
    Some(total / relevant.min(k) as f64)
}

fn dcg(ranked: &[bool], k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, &rel)| {
            let gain = if rel { 1.0 } else { 0.0 };
            gain / ((j + 2) as f64).log2()
        })
        .sum()
}

/// DCG with gain `2^rel − 1` and discount `log₂(j + 1)` at rank `j`,
/// normalized by the DCG of the ideal ordering of the same items.
pub fn ndcg_at_k(u: &UserTestSet, k: usize) -> Option<f64> {
    let relevant = u.n_relevant();
    if relevant == 0 || k == 0 {
        return None;
    }
    let ranked = u.ranked_relevance();
    let mut ideal = ranked.clone();
    ideal.sort_by(|a, b| b.cmp(a));
    Some(dcg(&ranked, k) / dcg(&ideal, k))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(HomfError::DimensionMismatch {
            op: "auc",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(HomfError::NonFinite("auc"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(HomfError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&p| labels[p]).count();
        rank_sum += mid_rank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub dataset_id: String,
}

/// Averaged metrics keyed `precision@K`, `recall@K`, `map@K`, `ndcg@K`, `auc`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub values: BTreeMap<String, f64>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
    pub metadata: RunMetadata,
}

pub const RANKING_METRICS: [&str; 4] = ["precision", "recall", "map", "ndcg"];

impl MetricReport {
    pub fn get(&self, metric: &str, k: usize) -> Option<f64> {
        self.values.get(&format!("{metric}@{k}")).copied()
    }

    pub fn auc(&self) -> Option<f64> {
        self.values.get("auc").copied()
    }

    /// Looks up `"ndcg@10"`-style or `"auc"` keys.
    pub fn lookup(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// One line per metric: `name K value`, with `-` as K for AUC.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# config_hash {}", self.metadata.config_hash);
        let _ = writeln!(out, "# seed {}", self.metadata.seed);
        let _ = writeln!(out, "# dataset {}", self.metadata.dataset_id);
        let _ = writeln!(
            out,
            "# users_evaluated {} users_skipped {}",
            self.users_evaluated, self.users_skipped
        );
        for name in RANKING_METRICS {
            for &k in &self.ks {
                if let Some(v) = self.get(name, k) {
                    let _ = writeln!(out, "{name} {k} {v}");
                }
            }
        }
        if let Some(v) = self.auc() {
            let _ = writeln!(out, "auc - {v}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| HomfError::Format(e.to_string()))
    }

    /// Writes `<stem>.txt` and `<stem>.json` atomically.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_atomic(&dir.join(format!("{stem}.txt")), self.to_text().as_bytes())?;
        write_atomic(&dir.join(format!("{stem}.json")), self.to_json().as_bytes())
    }
}

/// Unweighted mean of each per-user metric over users with at least one
/// relevant item.
pub fn aggregate(users: &[UserTestSet], ks: &[usize]) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(HomfError::InvalidParameter(format!(
            "cutoffs must be positive and non-empty, got {ks:?}"
        )));
    }
    let evaluable: Vec<&UserTestSet> = users.iter().filter(|u| u.n_relevant() > 0).collect();
    if evaluable.is_empty() {
        return Err(HomfError::NoEvaluableUsers);
    }
    let count = evaluable.len() as f64;
    let mut values = BTreeMap::new();
    for &k in ks {
        let (mut p, mut r, mut ap, mut nd) = (0.0, 0.0, 0.0, 0.0);
        for u in &evaluable {
            let (pu, ru) = precision_recall_at_k(u, k).expect("evaluable user");
            p += pu;
            r += ru;
            ap += average_precision_at_k(u, k).expect("evaluable user");
            nd += ndcg_at_k(u, k).expect("evaluable user");
        }
        values.insert(format!("precision@{k}"), p / count);
        values.insert(format!("recall@{k}"), r / count);
        values.insert(format!("map@{k}"), ap / count);
        values.insert(format!("ndcg@{k}"), nd / count);
    }
    Ok(MetricReport {
        ks: ks.to_vec(),
        values,
        users_evaluated: evaluable.len(),
        users_skipped: users.len() - evaluable.len(),
        metadata: RunMetadata::default(),
    })
}
