//! Experiment orchestration: configuration, fitting on a split, evaluation,
//! grid search and report emission.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_graph, load_ratings, sample_unobserved, split, Delimiter, Rating, RatingDataset,
    SplitSpec, ValueKind,
};
use crate::error::{HomfError, Result, StageExt};
use crate::factor::{
    self, fit, predict, predict_symmetric, EmbeddingPair, FitConfig, ObjectiveTrace, UpdateOrder,
};
use crate::fsutil::write_atomic;
use crate::graph::{build_adjacency, GraphSpec, WeightFn};
use crate::metrics::{aggregate, auc, MetricReport, RunMetadata, UserTestSet};
use crate::sparse::SparseMatrix;
use crate::synthetic::{planted_clusters, PlantedSpec};
use crate::walk::{TransitionMatrix, WalkConfig};

/// Environment variable consulted for the worker count when the config
/// does not set one.
pub const WORKERS_ENV: &str = "HOMF_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub id: Option<String>,
    /// Ratings file; when absent, `synthetic` must be given.
    #[serde(default)]
    pub ratings: Option<PathBuf>,
    #[serde(default = "default_delimiter")]
    pub format: Delimiter,
    #[serde(default)]
    pub value_kind: ValueKind,
    /// Star ratings at or above this value count as relevant.
    #[serde(default = "default_threshold")]
    pub relevance_threshold: f64,
    #[serde(default)]
    pub row_graph: Option<PathBuf>,
    #[serde(default)]
    pub col_graph: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<PlantedSpec>,
}

fn default_delimiter() -> Delimiter {
    Delimiter::DoubleColon
}

fn default_threshold() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub g1: WeightFn,
    #[serde(default)]
    pub g2: WeightFn,
    /// Defaults to `g1`.
    #[serde(default)]
    pub g3: Option<WeightFn>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            g1: WeightFn::Exponential,
            g2: WeightFn::Exponential,
            g3: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub k: usize,
    pub lambda: f64,
    pub steps: usize,
    pub support_epsilon: f64,
    pub outer_sweeps: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub seed: u64,
    /// Falls back to `HOMF_WORKERS`, then to the number of CPUs.
    pub workers: Option<usize>,
    pub order: UpdateOrder,
    pub objective_sample: usize,
    pub symmetric_scores: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            k: f.k,
            lambda: f.lambda,
            steps: f.walk.steps,
            support_epsilon: f.walk.support_epsilon,
            outer_sweeps: f.outer_sweeps,
            cg_tol: f.cg_tol,
            cg_max_iter: f.cg_max_iter,
            seed: f.seed,
            workers: None,
            order: f.order,
            objective_sample: f.objective_sample,
            symmetric_scores: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![5, 10] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    /// Used only when a side graph is configured.
    pub alphas: Vec<f64>,
    pub steps: Vec<usize>,
    /// Rating weightings to try; empty means the configured `g2` only.
    pub weights: Vec<WeightFn>,
    /// Metric key such as `"ndcg@10"` or `"auc"`.
    pub selection: String,
    /// Grid points evaluated at once; the worker budget is divided among them.
    pub parallel_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambdas: (-4..=2).map(|e| 10f64.powi(e)).collect(),
            alphas: vec![0.15, 0.25, 0.5, 0.75],
            steps: even_steps(8),
            weights: Vec::new(),
            selection: "ndcg@10".into(),
            parallel_points: 1,
        }
    }
}

/// `{2, 4, …, t_max}`.
pub fn even_steps(t_max: usize) -> Vec<usize> {
    (2..=t_max).step_by(2).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HomfError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HomfError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.dataset.ratings,
            &mut self.dataset.row_graph,
            &mut self.dataset.col_graph,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(out) = &mut self.output {
            fix(&mut out.dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn has_side_graph(&self) -> bool {
        self.dataset.row_graph.is_some() || self.dataset.col_graph.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.ratings.is_none() && self.dataset.synthetic.is_none() {
            return Err(HomfError::Config(
                "dataset needs either `ratings` or a `synthetic` section".into(),
            ));
        }
        if self.graph.alpha != 0.0 && !self.has_side_graph() {
            return Err(HomfError::Config(format!(
                "alpha = {} requires a row_graph or col_graph file",
                self.graph.alpha
            )));
        }
        if self.has_side_graph() && !(self.graph.alpha > 0.0 && self.graph.alpha < 1.0) {
            return Err(HomfError::Config(format!(
                "alpha must lie in (0, 1) with a side graph, got {}",
                self.graph.alpha
            )));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(HomfError::Config("eval.ks must be non-empty and positive".into()));
        }
        self.fit_config(1).validate().map_err(|e| HomfError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn dataset_id(&self) -> String {
        if let Some(id) = &self.dataset.id {
            return id.clone();
        }
        match &self.dataset.ratings {
            Some(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "ratings".into()),
            None => "synthetic".into(),
        }
    }

    /// Short digest of every field that can change results. Worker count
    /// and output location are excluded.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.fit.workers = None;
        canon.output = None;
        if let Some(g) = &mut canon.grid {
            g.parallel_points = 1;
        }
        let json = serde_json::to_vec(&canon).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn workers(&self) -> usize {
        resolve_workers(self.fit.workers)
    }

    pub fn fit_config(&self, workers: usize) -> FitConfig {
        let f = &self.fit;
        FitConfig {
            k: f.k,
            lambda: f.lambda,
            walk: WalkConfig {
                steps: f.steps,
                support_epsilon: f.support_epsilon,
            },
            outer_sweeps: f.outer_sweeps,
            cg_tol: f.cg_tol,
            cg_max_iter: f.cg_max_iter,
            seed: f.seed,
            workers,
            order: f.order,
            objective_sample: f.objective_sample,
        }
    }

    pub fn graph_spec(&self, m: usize, n: usize) -> GraphSpec {
        GraphSpec {
            m,
            n,
            alpha: self.graph.alpha,
            g1: self.graph.g1,
            g2: self.graph.g2,
            g3: self.graph.g3.unwrap_or(self.graph.g1),
        }
    }
}

/// Config value, else `HOMF_WORKERS`, else the CPU count.
pub fn resolve_workers(configured: Option<usize>) -> usize {
    if let Some(w) = configured {
        return w.max(1);
    }
    if let Some(w) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        return w.max(1);
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Loaded data shared by every run of one configuration.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub dataset: RatingDataset,
    pub row_graph: Option<SparseMatrix>,
    pub col_graph: Option<SparseMatrix>,
    pub split: crate::data::Split,
    /// Held-out negatives for binary data (never graph edges).
    pub negatives: Vec<(usize, usize)>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate().stage("config")?;
    let dataset = match (&cfg.dataset.ratings, &cfg.dataset.synthetic) {
        (Some(path), _) => load_ratings(path, cfg.dataset.format, cfg.dataset.value_kind),
        (None, Some(spec)) => planted_clusters(spec),
        (None, None) => unreachable!("validated"),
    }
    .stage("load")?;
    let row_graph = cfg
        .dataset
        .row_graph
        .as_ref()
        .map(|p| load_graph(p, &dataset.row_ids).map(|(g, _)| g))
        .transpose()
        .stage("load")?;
    let col_graph = cfg
        .dataset
        .col_graph
        .as_ref()
        .map(|p| load_graph(p, &dataset.col_ids).map(|(g, _)| g))
        .transpose()
        .stage("load")?;
    let parts = split(&dataset, &cfg.split).stage("split")?;
    let negatives = if dataset.value_kind == ValueKind::Binary {
        let observed: HashSet<_> = dataset.ratings.iter().map(|r| (r.row, r.col)).collect();
        let count = parts.train.len() + parts.validation.len();
        sample_unobserved(dataset.m, dataset.n, &observed, count, cfg.split.seed ^ 0x6e65_6761)
            .stage("negatives")?
    } else {
        Vec::new()
    };
    Ok(PreparedData {
        dataset,
        row_graph,
        col_graph,
        split: parts,
        negatives,
    })
}

/// Fitted model plus its evaluation on one held-out set.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub embeddings: EmbeddingPair,
    pub trace: ObjectiveTrace,
    pub report: MetricReport,
    /// Every predicted score was numerically zero or non-finite.
    pub degenerate: bool,
    pub fit_seconds: f64,
}

fn score(e: &EmbeddingPair, user: usize, item: usize, symmetric: bool) -> Result<f64> {
    if symmetric {
        predict_symmetric(e, user, item)
    } else {
        predict(e, user, item)
    }
}

/// Builds per-user test sets (star data) or a labelled score list (binary)
/// and computes the metrics.
pub fn evaluate(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    emb: &EmbeddingPair,
    held_out: &[Rating],
) -> Result<(MetricReport, bool)> {
    let symmetric = cfg.fit.symmetric_scores;
    let mut all_scores = Vec::new();
    let report = match data.dataset.value_kind {
        ValueKind::Star => {
            let mut per_user: BTreeMap<usize, (Vec<usize>, Vec<bool>, Vec<f64>)> = BTreeMap::new();
            for r in held_out {
                let s = score(emb, r.row, r.col, symmetric)?;
                all_scores.push(s);
                let entry = per_user.entry(r.row).or_default();
                entry.0.push(r.col);
                entry.1.push(r.value >= cfg.dataset.relevance_threshold);
                entry.2.push(s);
            }
            let users: Vec<UserTestSet> = per_user
                .into_iter()
                .map(|(u, (items, rel, scores))| UserTestSet::new(u, items, rel, scores))
                .collect::<Result<_>>()?;
            aggregate(&users, &cfg.eval.ks)?
        }
        ValueKind::Binary => {
            let mut labels = Vec::new();
            for r in held_out {
                all_scores.push(score(emb, r.row, r.col, symmetric)?);
                labels.push(true);
            }
            for &(u, i) in &data.negatives {
                all_scores.push(score(emb, u, i, symmetric)?);
                labels.push(false);
            }
            let mut report = MetricReport {
                ks: Vec::new(),
                users_evaluated: held_out
                    .iter()
                    .map(|r| r.row)
                    .collect::<HashSet<_>>()
                    .len(),
                ..MetricReport::default()
            };
            report.values.insert("auc".into(), auc(&all_scores, &labels)?);
            report
        }
    };
    let degenerate = all_scores.iter().all(|s| !s.is_finite() || s.abs() <= 1e-12);
    Ok((report, degenerate))
}

/// Joint adjacency built from `train` ratings and the side graphs.
pub fn training_adjacency(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    train: &[Rating],
) -> Result<SparseMatrix> {
    let ds = &data.dataset;
    let r = ds.matrix_of(train)?;
    let spec = cfg.graph_spec(ds.m, ds.n);
    build_adjacency(&r, data.row_graph.as_ref(), data.col_graph.as_ref(), &spec)
}

pub fn training_tpm(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    train: &[Rating],
) -> Result<TransitionMatrix> {
    TransitionMatrix::new(training_adjacency(cfg, data, train)?.row_normalize()?)
}

/// Graph from `train` only, fit, and evaluation on `held_out`.
pub fn fit_and_evaluate(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    train: &[Rating],
    held_out: &[Rating],
    workers: usize,
) -> Result<RunResult> {
    let ds = &data.dataset;
    let tpm = training_tpm(cfg, data, train).stage("graph")?;
    let fit_cfg = cfg.fit_config(workers);
    let start = Instant::now();
    let (embeddings, trace) = fit(&tpm, ds.m, ds.n, &fit_cfg).stage("fit")?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let (mut report, degenerate) = evaluate(cfg, data, &embeddings, held_out).stage("evaluate")?;
    report.metadata = RunMetadata {
        config_hash: cfg.config_hash(),
        seed: cfg.fit.seed,
        dataset_id: cfg.dataset_id(),
    };
    Ok(RunResult {
        embeddings,
        trace,
        report,
        degenerate,
        fit_seconds,
    })
}

/// Fits on the full training pool (train + validation) and scores the test set.
pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData) -> Result<RunResult> {
    fit_and_evaluate(cfg, data, &data.split.train_pool(), &data.split.test, cfg.workers())
}

/// End-to-end run; writes outputs when `[output]` is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let data = prepare(cfg)?;
    let result = run_prepared(cfg, &data)?;
    if let Some(out) = &cfg.output {
        let mut log = String::new();
        let _ = writeln!(log, "config_hash {}", cfg.config_hash());
        let _ = writeln!(log, "dataset {} m={} n={} nnz={}", cfg.dataset_id(), data.dataset.m, data.dataset.n, data.dataset.nnz());
        let _ = writeln!(
            log,
            "split train={} validation={} test={}",
            data.split.train.len(),
            data.split.validation.len(),
            data.split.test.len()
        );
        let _ = writeln!(log, "workers {}", cfg.workers());
        let _ = writeln!(log, "sweeps {} converged {}", result.trace.objective.len() - 1, result.trace.converged);
        let _ = writeln!(log, "fit_seconds {:.3}", result.fit_seconds);
        let _ = writeln!(log, "total_seconds {:.3}", start.elapsed().as_secs_f64());
        write_outputs(&out.dir, cfg, &data, &result, &log).stage("write")?;
    }
    Ok(result)
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    data: &PreparedData,
    result: &RunResult,
    log: &str,
) -> Result<()> {
    result.report.write(dir, "report")?;
    factor::write_embeddings(&dir.join("embeddings.homf"), &result.embeddings)?;
    let trace = serde_json::to_string_pretty(&result.trace).expect("trace serializes");
    write_atomic(&dir.join("trace.json"), trace.as_bytes())?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    data.dataset.write_id_maps(dir)?;
    write_atomic(&dir.join("run.log"), log.as_bytes())
}

/// One evaluated grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub alpha: f64,
    pub steps: usize,
    pub weight: WeightFn,
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub best: ExperimentConfig,
    pub best_row: usize,
    pub test: RunResult,
}

impl GridOutcome {
    pub fn table_csv(&self, selection: &str) -> String {
        let mut out = format!("lambda,alpha,steps,weight,{selection},degenerate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.lambda, r.alpha, r.steps, r.weight, r.value, r.degenerate
            );
        }
        out
    }
}

fn grid_points(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<ExperimentConfig>> {
    let alphas = if cfg.has_side_graph() {
        grid.alphas.clone()
    } else {
        vec![0.0]
    };
    let weights = if grid.weights.is_empty() {
        vec![cfg.graph.g2]
    } else {
        grid.weights.clone()
    };
    if grid.lambdas.is_empty() || alphas.is_empty() || grid.steps.is_empty() {
        return Err(HomfError::Config("grid axes must be non-empty".into()));
    }
    let mut points = Vec::new();
    for &weight in &weights {
        for &steps in &grid.steps {
            for &alpha in &alphas {
                for &lambda in &grid.lambdas {
                    let mut p = cfg.clone();
                    p.grid = None;
                    p.graph.g2 = weight;
                    p.graph.alpha = alpha;
                    p.fit.steps = steps;
                    p.fit.lambda = lambda;
                    p.validate()?;
                    points.push(p);
                }
            }
        }
    }
    Ok(points)
}

/// Exhaustive search on the validation split; the best point is refit on
/// the training pool and scored on the test split once.
pub fn grid_search(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<GridOutcome> {
    let data = prepare(cfg)?;
    if data.split.validation.is_empty() {
        return Err(HomfError::Config("grid search needs a non-empty validation split".into()));
    }
    let points = grid_points(cfg, grid).stage("grid")?;
    let total_workers = cfg.workers();
    let concurrent = grid.parallel_points.clamp(1, points.len());
    let per_point = (total_workers / concurrent).max(1);

    let eval_point = |p: &ExperimentConfig| -> Result<GridRow> {
        let run = fit_and_evaluate(p, &data, &data.split.train, &data.split.validation, per_point)?;
        let value = run.report.lookup(&grid.selection).ok_or_else(|| {
            HomfError::Config(format!("selection metric {:?} not in report", grid.selection))
        })?;
        log::info!(
            "grid lambda={} alpha={} T={} weight={} -> {}={value:.5}",
            p.fit.lambda, p.graph.alpha, p.fit.steps, p.graph.g2, grid.selection
        );
        Ok(GridRow {
            lambda: p.fit.lambda,
            alpha: p.graph.alpha,
            steps: p.fit.steps,
            weight: p.graph.g2,
            value,
            degenerate: run.degenerate,
        })
    };
    let rows: Vec<GridRow> = if concurrent > 1 {
        let pool = factor::build_pool(concurrent)?;
        pool.install(|| points.par_iter().map(eval_point).collect::<Result<_>>())?
    } else {
        points.iter().map(eval_point).collect::<Result<_>>()?
    };

    let best_row = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.degenerate && r.value.is_finite())
        .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, v)) if v >= r.value => best,
            _ => Some((i, r.value)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| HomfError::Config("every grid point was degenerate".into()))?;

    let mut best = points[best_row].clone();
    best.output = cfg.output.clone();
    best.fit.workers = cfg.fit.workers;
    let test = run_prepared(&best, &data)?;
    let outcome = GridOutcome {
        rows,
        best,
        best_row,
        test,
    };
    if let Some(out) = &cfg.output {
        write_atomic(
            &out.dir.join("grid.csv"),
            outcome.table_csv(&grid.selection).as_bytes(),
        )
        .stage("write")?;
        let log = format!(
            "config_hash {}\nbest_row {}\nbest_config_hash {}\n",
            cfg.config_hash(),
            best_row,
            outcome.best.config_hash()
        );
        write_outputs(&out.dir, &outcome.best, &data, &outcome.test, &log).stage("write")?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            [dataset]
            id = "tiny"
            [dataset.synthetic]
            m = 60
            n = 50
            clusters = 3
            density = 0.1
            affinity = 4.0
            noise = 0.1
            seed = 5

            [fit]
            k = 4
            lambda = 0.1
            steps = 2
            outer_sweeps = 3
            workers = 1

            [eval]
            ks = [1, 3]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = synthetic_cfg();
        cfg.validate().unwrap();
        assert_eq!(cfg.split.train_fraction, 0.8);
        assert_eq!(cfg.graph.g2, WeightFn::Exponential);
        assert_eq!(cfg.graph_spec(2, 3).g3, WeightFn::Exponential);

        let mut bad = cfg.clone();
        bad.graph.alpha = 0.3;
        assert!(matches!(bad.validate(), Err(HomfError::Config(_))));
        let err = prepare(&bad).unwrap_err();
        assert!(err.to_string().starts_with("[config]"), "{err}");

        assert!(ExperimentConfig::from_toml_str("[dataset]\nbogus = 1\n").is_err());
        let empty = ExperimentConfig::from_toml_str("[dataset]\n").unwrap();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn config_hash_tracks_semantics_only() {
        let cfg = synthetic_cfg();
        let h = cfg.config_hash();
        let mut same = cfg.clone();
        same.fit.workers = Some(8);
        same.output = Some(OutputSection { dir: "elsewhere".into() });
        assert_eq!(same.config_hash(), h);
        let mut diff = cfg.clone();
        diff.fit.lambda = 0.2;
        assert_ne!(diff.config_hash(), h);
        let mut diff = cfg.clone();
        diff.split.seed = 1;
        assert_ne!(diff.config_hash(), h);
        let round = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(round.config_hash(), h);
    }

    #[test]
    fn config_value_beats_environment() {
        assert_eq!(resolve_workers(Some(3)), 3);
        assert!(resolve_workers(None) >= 1);
    }

    #[test]
    fn even_step_grid() {
        assert_eq!(even_steps(8), vec![2, 4, 6, 8]);
        assert_eq!(GridSpec::default().lambdas.len(), 7);
    }

    #[test]
    fn run_reports_all_metrics() {
        let cfg = synthetic_cfg();
        let run = run_experiment(&cfg).unwrap();
        for key in ["precision@1", "recall@3", "map@1", "ndcg@3"] {
            let v = run.report.lookup(key).unwrap();
            assert!((0.0..=1.0).contains(&v), "{key}={v}");
        }
        assert_eq!(run.report.metadata.config_hash, cfg.config_hash());
        assert!(!run.degenerate);
    }

    #[test]
    fn grid_rows_and_single_point_equivalence() {
        let cfg = synthetic_cfg();
        let grid = GridSpec {
            lambdas: vec![0.1],
            steps: vec![2],
            selection: "ndcg@3".into(),
            ..GridSpec::default()
        };
        let out = grid_search(&cfg, &grid).unwrap();
        assert_eq!(out.rows.len(), 1);
        let direct = run_experiment(&cfg).unwrap();
        assert_eq!(out.test.report.values, direct.report.values);
        assert_eq!(out.test.embeddings, direct.embeddings);

        let grid = GridSpec {
            lambdas: vec![1e12, 0.1],
            steps: vec![1, 2, 4],
            selection: "ndcg@3".into(),
            ..GridSpec::default()
        };
        let out = grid_search(&cfg, &grid).unwrap();
        assert_eq!(out.rows.len(), 6);
        assert!(out.rows.iter().filter(|r| r.lambda == 1e12).all(|r| r.degenerate));
        assert_eq!(out.best.fit.lambda, 0.1);
        assert_eq!(out.table_csv("ndcg@3").lines().count(), 7);
    }
}
