use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, SymmetricEigen};

use homf::experiment::{self, ExperimentConfig, OutputSection, PreparedData};
use homf::factor::{self, neighbors, NeighborPool, Side};
use homf::synthetic::{planted_clusters, to_double_colon, PlantedSpec};
use homf::walk::{eigen_map, TransitionMatrix, WalkConfig};
use homf::{FitConfig, SparseMatrix};

#[derive(Parser)]
#[command(name = "homf", version, about = "Higher-order matrix factorization on rating graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit on the training pool, score the test split and write all outputs.
    Fit(FitArgs),
    /// Score saved embeddings on the test split of a config.
    Evaluate(EvaluateArgs),
    /// Select hyperparameters on the validation split, then refit and test.
    GridSearch(FitArgs),
    /// Nearest nodes to a query node in embedding space.
    Neighbors(NeighborArgs),
    /// Print one column (or row) of the walk polynomial, one value per line.
    SampleColumn(SampleArgs),
    /// Eigenvalue decay of the walk polynomial on a small instance.
    Spectrum(SpectrumArgs),
    /// Time one update pass for several worker counts.
    SpeedupBench(BenchArgs),
    /// Write a planted-cluster ratings file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config and the HOMF_WORKERS variable.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write embeddings as text.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Directory for report.txt / report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NeighborArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Joint node index: users are 0..m, items m..m+n.
    #[arg(long)]
    node: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value = "all")]
    pool: NeighborPool,
}

#[derive(Args)]
struct SampleArgs {
    /// Build the transition matrix from the training pool of this config.
    #[arg(long, conflicts_with = "matrix")]
    config: Option<PathBuf>,
    /// Or read `row col weight` triplets (0-based) and row-normalize them.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    node: usize,
    #[arg(long = "walk")]
    steps: usize,
    /// Sample a row instead of a column.
    #[arg(long)]
    row: bool,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Instance source; defaults to a small planted-cluster graph.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
    steps: Vec<usize>,
    /// Number of leading eigenvalues to print.
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, default_value_t = 2000)]
    max_nodes: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance source; defaults to a 2500×2500 planted graph at 1% density.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4])]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    steps: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 0.01)]
    density: f64,
    #[arg(long, default_value_t = 4.0)]
    affinity: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::GridSearch(a) => cmd_grid(a),
        Command::Neighbors(a) => cmd_neighbors(a),
        Command::SampleColumn(a) => cmd_sample(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::SpeedupBench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))
}

fn apply_overrides(cfg: &mut ExperimentConfig, a: &FitArgs) {
    if a.workers.is_some() {
        cfg.fit.workers = a.workers;
    }
    if let Some(dir) = &a.out {
        cfg.output = Some(OutputSection { dir: dir.clone() });
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    apply_overrides(&mut cfg, &a);
    let run = experiment::run_experiment(&cfg)?;
    if a.text {
        let Some(out) = &cfg.output else {
            bail!("--text needs an output directory");
        };
        factor::write_embeddings_text(&out.dir.join("embeddings.txt"), &run.embeddings)?;
    }
    print!("{}", run.report.to_text());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let data = experiment::prepare(&cfg)?;
    let emb = factor::read_embeddings(&a.embeddings)?;
    if emb.m != data.dataset.m || emb.n != data.dataset.n {
        bail!(
            "embeddings are for {}×{} but the dataset is {}×{}",
            emb.m,
            emb.n,
            data.dataset.m,
            data.dataset.n
        );
    }
    let (mut report, _) = experiment::evaluate(&cfg, &data, &emb, &data.split.test)?;
    report.metadata = homf::metrics::RunMetadata {
        config_hash: cfg.config_hash(),
        seed: cfg.fit.seed,
        dataset_id: cfg.dataset_id(),
    };
    if let Some(dir) = &a.out {
        report.write(dir, "report")?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_grid(a: FitArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    apply_overrides(&mut cfg, &a);
    let grid = cfg.grid.clone().unwrap_or_default();
    let out = experiment::grid_search(&cfg, &grid)?;
    print!("{}", out.table_csv(&grid.selection));
    let best = &out.rows[out.best_row];
    println!(
        "# best lambda={} alpha={} steps={} weight={} validation {}={}",
        best.lambda, best.alpha, best.steps, best.weight, grid.selection, best.value
    );
    print!("{}", out.test.report.to_text());
    Ok(())
}

fn cmd_neighbors(a: NeighborArgs) -> Result<()> {
    let emb = factor::read_embeddings(&a.embeddings)?;
    for (node, dist) in neighbors(&emb, a.node, a.count, a.pool)? {
        let label = if node < emb.m {
            format!("user {node}")
        } else {
            format!("item {}", node - emb.m)
        };
        println!("{node}\t{label}\t{dist:.6e}");
    }
    Ok(())
}

/// Whitespace-separated `row col weight` triplets, 0-based, `#` comments.
fn read_triplet_matrix(path: &Path) -> Result<SparseMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    let mut size = 0;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            bail!("{}:{}: expected `row col weight`", path.display(), no + 1);
        }
        let (i, j, w): (usize, usize, f64) = (
            f[0].parse().with_context(|| format!("{}:{}", path.display(), no + 1))?,
            f[1].parse().with_context(|| format!("{}:{}", path.display(), no + 1))?,
            f[2].parse().with_context(|| format!("{}:{}", path.display(), no + 1))?,
        );
        size = size.max(i + 1).max(j + 1);
        entries.push((i, j, w));
    }
    if entries.is_empty() {
        bail!("{} holds no entries", path.display());
    }
    Ok(SparseMatrix::from_triplets(&entries, size, size)?)
}

fn config_instance(path: &Path) -> Result<(ExperimentConfig, PreparedData)> {
    let cfg = load_config(path)?;
    let data = experiment::prepare(&cfg)?;
    Ok((cfg, data))
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let tpm = match (&a.config, &a.matrix) {
        (Some(c), None) => {
            let (cfg, data) = config_instance(c)?;
            experiment::training_tpm(&cfg, &data, &data.split.train_pool())?
        }
        (None, Some(m)) => TransitionMatrix::new(read_triplet_matrix(m)?.row_normalize()?)?,
        _ => bail!("give exactly one of --config or --matrix"),
    };
    let walk = WalkConfig::new(a.steps);
    let v = if a.row {
        tpm.row(a.node, &walk)?
    } else {
        tpm.column(a.node, &walk)?
    };
    let mut out = String::with_capacity(v.len() * 24);
    for x in v {
        out.push_str(&format!("{x:.17e}\n"));
    }
    print!("{out}");
    Ok(())
}

fn default_planted(m: usize, n: usize, density: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str("[dataset]\nid = \"planted\"\n").expect("static config");
    cfg.dataset.synthetic = Some(PlantedSpec {
        m,
        n,
        density,
        ..PlantedSpec::default()
    });
    cfg
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => default_planted(150, 150, 0.1),
    };
    let data = experiment::prepare(&cfg)?;
    let adj = experiment::training_adjacency(&cfg, &data, &data.split.train_pool())?;
    let n = adj.n_rows();
    if n > a.max_nodes {
        bail!("instance has {n} nodes; the dense eigensolver is limited to --max-nodes {}", a.max_nodes);
    }
    // A = D⁻¹W with W symmetric is similar to D^{-1/2} W D^{-1/2}; empty rows
    // carry the unit self-loop the transition matrix gives them.
    let mut w = DMatrix::from_row_slice(n, n, &adj.to_dense().concat());
    for i in 0..n {
        if w.row(i).sum() == 0.0 {
            w[(i, i)] = 1.0;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]);
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));

    println!("# h(lambda, T) = lambda (1 - lambda^T) / ((1 - lambda) T)");
    print!("lambda");
    for t in &a.steps {
        print!("\tT={t}");
    }
    println!();
    for l in [0.95, 0.9, 0.75, 0.5, 0.25, 0.1, -0.5, -0.9] {
        print!("{l}");
        for &t in &a.steps {
            print!("\t{:.6}", eigen_map(l, t));
        }
        println!();
    }
    // One unit eigenvalue per closed component; they map to 1 for every T.
    let units = eig.iter().filter(|&&l| (l - 1.0).abs() < 1e-9).count();
    eig.retain(|&l| (l - 1.0).abs() >= 1e-9);
    let n = eig.len();
    println!("# {} nodes, {units} unit eigenvalues omitted", adj.n_rows());
    println!("# leading |h(lambda_i, T)| over the remaining spectrum, sorted descending");
    print!("rank");
    for t in &a.steps {
        print!("\tT={t}");
    }
    println!();
    let columns: Vec<Vec<f64>> = a
        .steps
        .iter()
        .map(|&t| {
            let mut h: Vec<f64> = eig.iter().map(|&l| eigen_map(l, t).abs()).collect();
            h.sort_by(|x, y| y.total_cmp(x));
            h
        })
        .collect();
    for r in 0..a.top.min(n) {
        print!("{}", r + 1);
        for c in &columns {
            print!("\t{:.6}", c[r]);
        }
        println!();
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    if a.workers.is_empty() || a.repeats == 0 {
        bail!("need at least one worker count and one repeat");
    }
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => default_planted(2500, 2500, 0.01),
    };
    let data = experiment::prepare(&cfg)?;
    let tpm = experiment::training_tpm(&cfg, &data, &data.split.train_pool())?;
    let (m, n) = (data.dataset.m, data.dataset.n);
    let base = FitConfig {
        k: a.k,
        walk: WalkConfig::new(a.steps),
        ..FitConfig::default()
    };
    let init = factor::init_embeddings(m, n, a.k, base.seed)?;
    println!(
        "# {} columns, T={}, k={}, {} logical CPUs, best of {} runs",
        m + n,
        a.steps,
        a.k,
        std::thread::available_parallelism().map_or(1, |p| p.get()),
        a.repeats
    );
    println!("workers\tseconds\tspeedup");
    let mut t1 = None;
    for &w in &a.workers {
        let cfg = FitConfig { workers: w, ..base.clone() };
        let mut best = f64::INFINITY;
        for _ in 0..a.repeats {
            let start = Instant::now();
            factor::update_factor(&tpm, &init.v, Side::U, &cfg, &init.u)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        // speedup(N) is relative to the single-worker time.
        if w == 1 {
            t1 = Some(best);
        }
        match t1 {
            Some(t) => println!("{w}\t{best:.4}\t{:.3}", t / best),
            None => println!("{w}\t{best:.4}\t-"),
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = PlantedSpec {
        m: a.m,
        n: a.n,
        clusters: a.clusters,
        density: a.density,
        affinity: a.affinity,
        noise: a.noise,
        seed: a.seed,
    };
    let ds = planted_clusters(&spec)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, to_double_colon(&ds))
        .with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} ratings ({}×{}) to {}", ds.nnz(), ds.m, ds.n, a.out.display());
    Ok(())
}
