//! Rating and side-graph ingestion, train/validation/test splitting, and
//! negative sampling for one-class data.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HomfError, Result};
use crate::fsutil::write_atomic;
use crate::sparse::SparseMatrix;

/// Field separator of a ratings file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    /// `user::item::rating[::…]`
    DoubleColon,
    Tab,
    Comma,
}

impl Delimiter {
    fn split(self, line: &str) -> Vec<&str> {
        match self {
            Delimiter::DoubleColon => line.split("::").collect(),
            Delimiter::Tab => line.split('\t').collect(),
            Delimiter::Comma => line.split(',').collect(),
        }
    }
}

impl FromStr for Delimiter {
    type Err = HomfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "::" | "double_colon" | "double-colon" => Ok(Delimiter::DoubleColon),
            "\t" | "tab" | "\\t" => Ok(Delimiter::Tab),
            "," | "comma" => Ok(Delimiter::Comma),
            other => Err(HomfError::Config(format!("unknown delimiter {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Graded ratings, e.g. 0–5 stars.
    #[default]
    Star,
    /// One-class observations; every stored entry is a positive.
    Binary,
}

/// Bidirectional map between external ids and dense indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    to_dense: HashMap<String, usize>,
    to_external: Vec<String>,
}

impl IdMap {
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.to_dense.get(id) {
            return i;
        }
        let i = self.to_external.len();
        self.to_dense.insert(id.to_owned(), i);
        self.to_external.push(id.to_owned());
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.to_dense.get(id).copied()
    }

    pub fn external(&self, i: usize) -> Option<&str> {
        self.to_external.get(i).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.to_external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_external.is_empty()
    }

    /// Identity map `"0"…"n-1"`.
    pub fn sequential(n: usize) -> Self {
        let mut map = Self::default();
        for i in 0..n {
            map.intern(&i.to_string());
        }
        map
    }

    /// One external id per line, in dense order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for id in &self.to_external {
            let _ = writeln!(out, "{id}");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingDataset {
    pub m: usize,
    pub n: usize,
    pub ratings: Vec<Rating>,
    pub row_ids: IdMap,
    pub col_ids: IdMap,
    pub value_kind: ValueKind,
    /// Repeated `(row, col)` pairs overwritten during ingestion.
    pub duplicates: usize,
}

impl RatingDataset {
    /// Builds from dense-index triplets; later duplicates replace earlier ones.
    pub fn from_triplets(
        m: usize,
        n: usize,
        triplets: &[(usize, usize, f64)],
        value_kind: ValueKind,
    ) -> Result<Self> {
        let mut ds = RatingDataset {
            m,
            n,
            row_ids: IdMap::sequential(m),
            col_ids: IdMap::sequential(n),
            value_kind,
            ..Default::default()
        };
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for &(row, col, value) in triplets {
            if row >= m || col >= n {
                return Err(HomfError::IndexOutOfRange {
                    what: "rating",
                    index: if row >= m { row } else { col },
                    size: if row >= m { m } else { n },
                });
            }
            ds.push(&mut seen, row, col, value);
        }
        Ok(ds)
    }

    fn push(&mut self, seen: &mut HashMap<(usize, usize), usize>, row: usize, col: usize, value: f64) {
        match seen.get(&(row, col)) {
            Some(&slot) => {
                self.ratings[slot].value = value;
                self.duplicates += 1;
            }
            None => {
                seen.insert((row, col), self.ratings.len());
                self.ratings.push(Rating { row, col, value });
            }
        }
    }

    pub fn nnz(&self) -> usize {
        self.ratings.len()
    }

    /// `m×n` sparse rating matrix from a subset of ratings.
    pub fn matrix_of(&self, ratings: &[Rating]) -> Result<SparseMatrix> {
        let t: Vec<_> = ratings.iter().map(|r| (r.row, r.col, r.value)).collect();
        SparseMatrix::from_triplets(&t, self.m, self.n)
    }

    pub fn matrix(&self) -> Result<SparseMatrix> {
        self.matrix_of(&self.ratings)
    }

    /// Writes `row_ids.txt` and `col_ids.txt` into `dir`.
    pub fn write_id_maps(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("row_ids.txt"), self.row_ids.to_text().as_bytes())?;
        write_atomic(&dir.join("col_ids.txt"), self.col_ids.to_text().as_bytes())
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> HomfError {
    HomfError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses ratings text; `path` is used for error messages only.
pub fn parse_ratings(
    text: &str,
    path: &Path,
    delimiter: Delimiter,
    value_kind: ValueKind,
) -> Result<RatingDataset> {
    let mut ds = RatingDataset {
        value_kind,
        ..Default::default()
    };
    let mut seen = HashMap::new();
    let mut first_data_line = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = delimiter.split(line).into_iter().map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected at least 3 fields, found {}", fields.len()),
            ));
        }
        let value: f64 = match fields[2].parse() {
            Ok(v) => v,
            Err(_) if first_data_line => {
                // header row such as "userId,movieId,rating,timestamp"
                first_data_line = false;
                continue;
            }
            Err(_) => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("rating {:?} is not a number", fields[2]),
                ))
            }
        };
        first_data_line = false;
        if !value.is_finite() {
            return Err(parse_err(path, line_no, "rating is not finite"));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(path, line_no, "empty entity id"));
        }
        let row = ds.row_ids.intern(fields[0]);
        let col = ds.col_ids.intern(fields[1]);
        ds.push(&mut seen, row, col, value);
    }
    if ds.ratings.is_empty() {
        return Err(HomfError::EmptyInput(path.display().to_string()));
    }
    ds.m = ds.row_ids.len();
    ds.n = ds.col_ids.len();
    if ds.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate (row, col) pairs; kept the last value of each",
            path.display(),
            ds.duplicates
        );
    }
    Ok(ds)
}

pub fn load_ratings(path: &Path, delimiter: Delimiter, value_kind: ValueKind) -> Result<RatingDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| HomfError::io(path, e))?;
    parse_ratings(&text, path, delimiter, value_kind)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphLoadStats {
    pub edges_read: usize,
    pub unknown_skipped: usize,
    pub self_loops_dropped: usize,
}

/// Parses an edge list (`a b [w]` per line) into a symmetric `n×n` matrix.
/// Repeated undirected pairs keep the largest weight.
pub fn parse_graph(text: &str, path: &Path, ids: &IdMap) -> Result<(SparseMatrix, GraphLoadStats)> {
    let mut stats = GraphLoadStats::default();
    let mut edges: HashMap<(usize, usize), f64> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 2 or 3 fields, found {}", fields.len()),
            ));
        }
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| parse_err(path, line_no, format!("bad edge weight {w:?}")))?,
            None => 1.0,
        };
        stats.edges_read += 1;
        let (Some(a), Some(b)) = (ids.get(fields[0]), ids.get(fields[1])) else {
            stats.unknown_skipped += 1;
            continue;
        };
        if a == b {
            stats.self_loops_dropped += 1;
            continue;
        }
        let key = (a.min(b), a.max(b));
        let slot = edges.entry(key).or_insert(weight);
        *slot = slot.max(weight);
    }
    if stats.unknown_skipped > 0 {
        log::warn!("{}: skipped {} edges with unknown endpoints", path.display(), stats.unknown_skipped);
    }
    if stats.self_loops_dropped > 0 {
        log::warn!("{}: dropped {} self-loops", path.display(), stats.self_loops_dropped);
    }
    let mut triplets = Vec::with_capacity(2 * edges.len());
    for (&(a, b), &w) in &edges {
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    Ok((SparseMatrix::from_triplets(&triplets, ids.len(), ids.len())?, stats))
}

pub fn load_graph(path: &Path, ids: &IdMap) -> Result<(SparseMatrix, GraphLoadStats)> {
    let text = std::fs::read_to_string(path).map_err(|e| HomfError::io(path, e))?;
    parse_graph(&text, path, ids)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Share of the training pool held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Rating>,
    pub validation: Vec<Rating>,
    pub test: Vec<Rating>,
}

impl Split {
    /// Training pool: train plus validation, in original order.
    pub fn train_pool(&self) -> Vec<Rating> {
        let mut pool = self.train.clone();
        pool.extend_from_slice(&self.validation);
        pool
    }
}

fn share(total: usize, fraction: f64) -> usize {
    ((total as f64) * fraction + 1e-9).floor() as usize
}

/// Seeded entry-wise partition. The test share is `⌊nnz·(1 − train_fraction)⌋`
/// and validation is `⌊pool·validation_fraction⌋` of the remaining pool.
pub fn split(ds: &RatingDataset, spec: &SplitSpec) -> Result<Split> {
    for (name, f) in [
        ("train_fraction", spec.train_fraction),
        ("validation_fraction", spec.validation_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(HomfError::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let total = ds.nnz();
    let n_test = share(total, 1.0 - spec.train_fraction);
    let n_val = share(total - n_test, spec.validation_fraction);

    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let take = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| ds.ratings[i]).collect::<Vec<_>>()
    };
    Ok(Split {
        test: take(0..n_test),
        validation: take(n_test..n_test + n_val),
        train: take(n_test + n_val..total),
    })
}

/// `count` cells of the `m×n` grid outside `observed`, drawn uniformly
/// without replacement; returned sorted.
pub fn sample_unobserved(
    m: usize,
    n: usize,
    observed: &HashSet<(usize, usize)>,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let cells = m * n;
    let available = cells - observed.iter().filter(|&&(r, c)| r < m && c < n).count();
    if count > available {
        return Err(HomfError::TooDense {
            requested: count,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(usize, usize)> = if 2 * count <= available {
        let mut chosen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let cell = (rng.random_range(0..m), rng.random_range(0..n));
            if !observed.contains(&cell) && chosen.insert(cell) {
                out.push(cell);
            }
        }
        out
    } else {
        let free: Vec<(usize, usize)> = (0..m)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|cell| !observed.contains(cell))
            .collect();
        sample(&mut rng, free.len(), count)
            .into_iter()
            .map(|i| free[i])
            .collect()
    };
    out.sort_unstable();
    Ok(out)
}

/// As many negatives as the dataset has entries, never colliding with an
/// observed pair.
pub fn negative_sample(ds: &RatingDataset, seed: u64) -> Result<Vec<(usize, usize)>> {
    if ds.value_kind != ValueKind::Binary {
        return Err(HomfError::Config(
            "negative sampling applies to binary datasets only".into(),
        ));
    }
    let observed: HashSet<_> = ds.ratings.iter().map(|r| (r.row, r.col)).collect();
    sample_unobserved(ds.m, ds.n, &observed, ds.nnz(), seed)
}
