mod common;

use std::collections::HashSet;
use std::fs;

use homf::data::{self, Delimiter, ValueKind};
use homf::experiment::{self, ExperimentConfig, GridSpec, OutputSection};
use homf::factor;
use homf::metrics::MetricReport;

fn planted_config(dir: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"
        [dataset]
        id = "small"
        [dataset.synthetic]
        m = 120
        n = 100
        clusters = 4
        density = 0.05
        affinity = 4.0
        noise = 0.1
        seed = 3

        [fit]
        k = 6
        steps = 4
        outer_sweeps = 4

        [eval]
        ks = [5, 10]

        [output]
        dir = "{}"
        "#,
        dir.display()
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = planted_config(tmp.path());
    let run = experiment::run_experiment(&cfg).unwrap();
    for f in [
        "report.txt",
        "report.json",
        "embeddings.homf",
        "trace.json",
        "config.toml",
        "row_ids.txt",
        "col_ids.txt",
        "run.log",
    ] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let text = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(text.contains(&format!("# config_hash {}", cfg.config_hash())));
    let json = MetricReport::from_json(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json, run.report);
    let emb = factor::read_embeddings(&tmp.path().join("embeddings.homf")).unwrap();
    assert_eq!(emb, run.embeddings);
    // Saved config reloads to the same hash.
    let saved = ExperimentConfig::load(&tmp.path().join("config.toml")).unwrap();
    assert_eq!(saved.config_hash(), cfg.config_hash());
}

#[test]
fn report_is_byte_identical_across_worker_counts() {
    let mut reports = Vec::new();
    for workers in [1, 3] {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = planted_config(tmp.path());
        cfg.fit.workers = Some(workers);
        experiment::run_experiment(&cfg).unwrap();
        reports.push((
            fs::read(tmp.path().join("report.txt")).unwrap(),
            fs::read(tmp.path().join("report.json")).unwrap(),
            fs::read(tmp.path().join("embeddings.homf")).unwrap(),
        ));
    }
    assert!(reports[0] == reports[1]);
}

#[test]
fn ratings_from_file_with_side_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ratings = String::new();
    for u in 0..40 {
        for i in 0..30 {
            if (u * 7 + i * 3) % 5 == 0 {
                ratings.push_str(&format!("u{u}\ti{i}\t{}\t999\n", 1 + (u + i) % 5));
            }
        }
    }
    fs::write(tmp.path().join("r.tsv"), ratings).unwrap();
    fs::write(tmp.path().join("trust.txt"), "u1 u2\nu2 u3 0.5\nu4 u4\nghost u1\n").unwrap();
    let cfg_text = r#"
        [dataset]
        ratings = "r.tsv"
        format = "tab"
        row_graph = "trust.txt"
        relevance_threshold = 4.0
        [graph]
        alpha = 0.25
        [fit]
        k = 4
        steps = 2
        outer_sweeps = 2
        workers = 1
        [eval]
        ks = [3]
    "#;
    fs::write(tmp.path().join("c.toml"), cfg_text).unwrap();
    let cfg = ExperimentConfig::load(&tmp.path().join("c.toml")).unwrap();
    assert_eq!(cfg.dataset.format, Delimiter::Tab);
    assert_eq!(cfg.dataset_id(), "r");
    let data = experiment::prepare(&cfg).unwrap();
    let g = data.row_graph.as_ref().unwrap();
    assert_eq!(g.nnz(), 4);
    assert!(g.is_symmetric());
    let run = experiment::run_prepared(&cfg, &data).unwrap();
    assert!(run.report.lookup("ndcg@3").is_some());
}

#[test]
fn binary_data_reports_auc_with_disjoint_negatives() {
    let mut trip = Vec::new();
    for u in 0..60 {
        for i in 0..50 {
            if (u % 5 == i % 5) && (u + i) % 3 == 0 {
                trip.push((u, i, 1.0));
            }
        }
    }
    let text: String = trip.iter().map(|(u, i, _)| format!("{u},{i},1\n")).collect();
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("assoc.csv"), text).unwrap();
    let cfg = ExperimentConfig::from_toml_str(&format!(
        r#"
        [dataset]
        ratings = "{}"
        format = "comma"
        value_kind = "binary"
        [fit]
        k = 5
        steps = 2
        outer_sweeps = 3
        workers = 1
        "#,
        tmp.path().join("assoc.csv").display()
    ))
    .unwrap();
    let data = experiment::prepare(&cfg).unwrap();
    assert_eq!(data.dataset.value_kind, ValueKind::Binary);
    let positives: HashSet<_> = data.dataset.ratings.iter().map(|r| (r.row, r.col)).collect();
    assert_eq!(data.negatives.len(), data.split.train_pool().len());
    assert!(data.negatives.iter().all(|p| !positives.contains(p)));
    let run = experiment::run_prepared(&cfg, &data).unwrap();
    let auc = run.report.auc().unwrap();
    assert!(auc > 0.5, "planted structure should beat chance, got {auc}");
}

#[test]
fn graph_never_sees_held_out_ratings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = planted_config(tmp.path());
    let data = experiment::prepare(&cfg).unwrap();
    let pool = data.split.train_pool();
    let adj = experiment::training_adjacency(&cfg, &data, &pool).unwrap();
    let m = data.dataset.m;
    for r in &data.split.test {
        let in_pool = pool.iter().any(|p| p.row == r.row && p.col == r.col);
        assert!(!in_pool);
        assert_eq!(adj.get(r.row, m + r.col), 0.0);
    }
    assert_eq!(adj.nnz(), 2 * pool.len());
}

#[test]
fn grid_table_counts_and_persistence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = planted_config(tmp.path());
    let grid = GridSpec {
        lambdas: vec![0.01, 0.1],
        steps: vec![1, 2, 4],
        ..GridSpec::default()
    };
    let out = experiment::grid_search(&cfg, &grid).unwrap();
    assert_eq!(out.rows.len(), 3 * grid.lambdas.len());
    let csv = fs::read_to_string(tmp.path().join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + out.rows.len());
    assert!(csv.starts_with("lambda,alpha,steps,weight,ndcg@10,degenerate"));
    let best = &out.rows[out.best_row];
    assert!(out.rows.iter().all(|r| r.value <= best.value));
    assert_eq!(out.best.fit.lambda, best.lambda);
    assert_eq!(out.best.fit.steps, best.steps);
}

#[test]
fn concurrent_grid_points_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = planted_config(tmp.path());
    cfg.output = None;
    cfg.fit.workers = Some(2);
    let grid = GridSpec {
        lambdas: vec![0.05, 0.5],
        steps: vec![2, 3],
        ..GridSpec::default()
    };
    let seq = experiment::grid_search(&cfg, &grid).unwrap();
    let par = experiment::grid_search(
        &cfg,
        &GridSpec {
            parallel_points: 2,
            ..grid.clone()
        },
    )
    .unwrap();
    assert_eq!(seq.rows, par.rows);
    assert_eq!(seq.test.report, par.test.report);
}

#[test]
fn stage_tagged_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = planted_config(tmp.path());
    cfg.dataset.synthetic = None;
    cfg.dataset.ratings = Some(tmp.path().join("missing.dat"));
    let err = experiment::run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("[load]"), "{err}");

    fs::write(tmp.path().join("bad.dat"), "1::2::5\n1::oops\n").unwrap();
    cfg.dataset.ratings = Some(tmp.path().join("bad.dat"));
    let err = experiment::run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("[load]") && err.contains(":2"), "{err}");

    let mut cfg = planted_config(tmp.path());
    cfg.graph.alpha = 0.5;
    let err = experiment::run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("[config]") && err.contains("alpha"), "{err}");

    let mut cfg = planted_config(tmp.path());
    cfg.output = Some(OutputSection {
        dir: tmp.path().join("report.txt/nested"),
    });
    fs::write(tmp.path().join("report.txt"), "file in the way").unwrap();
    let err = experiment::run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("[write]"), "{err}");
}

#[test]
fn split_sizes_follow_floor_rule() {
    let trip: Vec<_> = (0..10).map(|i| (i % 4, i / 4, 3.0)).collect();
    let ds = data::RatingDataset::from_triplets(4, 3, &trip, ValueKind::Star).unwrap();
    let s = data::split(&ds, &data::SplitSpec::default()).unwrap();
    assert_eq!(s.test.len(), 2);
    assert_eq!(s.train.len() + s.validation.len(), 8);
    assert_eq!(s.validation.len(), 1);
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap();
            assert!(cfg.grid.is_some(), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
