//! The `l3svm` command line.
//!
//! Exit codes: 0 on success, 1 on data/solver/I-O failures, 2 on usage errors.

pub mod bench;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{self, ReplacementSource};
use crate::dataio::{self, Dataset};
use crate::error::Result;
use crate::landmarks::Projection;
use crate::model::{self, CvGrid, L3Config, LandmarkMethod, DEFAULT_GRID};
use crate::solver;

#[derive(Parser, Debug)]
#[command(name = "l3svm", version, about = "Locally linear landmark SVMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Write one predicted label per input line.
    Predict(PredictArgs),
    /// Print the accuracy of a model on a dataset.
    Eval(EvalArgs),
    /// Grid-search the cost (and gamma) by k-fold cross-validation.
    Cv(CvArgs),
    /// Generate a synthetic dataset in LIBSVM format.
    Synth(SynthArgs),
    /// Stability constant and generalization bound of a trained model.
    Bound(BoundArgs),
    /// Train/test benchmark over several seeds, with a linear-SVM baseline.
    Bench(BenchArgs),
    /// Empirical uniform-stability audit with frozen clusters and landmarks.
    Audit(AuditArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Random,
    Pca,
    Basis,
}

impl From<MethodArg> for LandmarkMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Random => LandmarkMethod::Random,
            MethodArg::Pca => LandmarkMethod::Pca,
            MethodArg::Basis => LandmarkMethod::StandardBasis,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProjectionArg {
    Linear,
    Rbf,
}

#[derive(Args, Debug)]
struct ModelShape {
    /// Number of k-means clusters.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    clusters: u64,
    /// Landmark count (defaults to the input dimension).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    landmarks: Option<u64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Random)]
    landmark_method: MethodArg,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Linear)]
    projection: ProjectionArg,
    /// RBF width, mu(x, l) = exp(-gamma |x - l|^2).
    #[arg(long, value_parser = positive_real, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = positive_real, default_value_t = solver::TRAIN_TOL)]
    tol: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1000)]
    max_epochs: u64,
    /// Skip the per-feature standard-deviation rescaling.
    #[arg(long)]
    no_standardize: bool,
}

impl ModelShape {
    fn projection(&self) -> Projection {
        match self.projection {
            ProjectionArg::Linear => Projection::Linear,
            ProjectionArg::Rbf => Projection::Rbf { gamma: self.gamma },
        }
    }

    fn config(&self, cost: f64) -> L3Config {
        L3Config {
            clusters: self.clusters as usize,
            landmarks: self.landmarks.map(|l| l as usize),
            landmark_method: self.landmark_method.into(),
            projection: self.projection(),
            cost,
            seed: self.seed,
            tol: self.tol,
            max_epochs: self.max_epochs as usize,
            standardize: !self.no_standardize,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    shape: ModelShape,
    #[arg(long, value_parser = positive_real, default_value_t = 1.0)]
    cost: f64,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    shape: ModelShape,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..), default_value_t = 5)]
    folds: u64,
    /// Cost values, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = positive_real)]
    grid: Option<Vec<f64>>,
    /// Gamma values for RBF projection, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = positive_real)]
    gamma_grid: Option<Vec<f64>>,
    /// Retrain on the full data with the selected point and save it here.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Xor,
    Swissroll,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training sample the model was fit on.
    #[arg(long)]
    data: PathBuf,
    /// Cost the model was trained with.
    #[arg(long, value_parser = positive_real)]
    cost: f64,
    #[arg(long, value_parser = unit_interval, default_value_t = 0.05)]
    delta: f64,
    /// Also write the report as a JSON document.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    data_train: PathBuf,
    #[arg(long)]
    data_test: PathBuf,
    /// Name used in the dataset column (defaults to the training file stem).
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    clusters: u64,
    /// One or more landmark counts; several produce an accuracy-vs-L sweep.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    landmarks: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value_t = MethodArg::Random)]
    landmark_method: MethodArg,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Linear)]
    projection: ProjectionArg,
    #[arg(long, value_parser = positive_real, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Fixed cost; when absent it is selected by cross-validation per seed.
    #[arg(long, value_parser = positive_real)]
    cost: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..), default_value_t = 5)]
    folds: u64,
    #[arg(long, value_delimiter = ',', value_parser = positive_real)]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    no_baseline: bool,
    /// CSV output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Training data; requires --pool. Without it a synthetic sample is drawn.
    #[arg(long, requires = "pool")]
    data: Option<PathBuf>,
    /// Held-out points used for replacements and probes.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SynthKind::Xor)]
    generator: SynthKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..), default_value_t = 200)]
    m: u64,
    #[command(flatten)]
    shape: ModelShape,
    #[arg(long, value_parser = positive_real, default_value_t = 1.0)]
    cost: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 200)]
    probes: usize,
}

fn positive_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1)"))
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Audit(a) => cmd_audit(a),
    }
}

fn read(path: &PathBuf) -> Result<Dataset> {
    dataio::read_libsvm_file(path, None)
}

/// Reads data destined for `model`, widening it to the model dimension.
fn read_for(path: &PathBuf, model: &model::L3Model) -> Result<Dataset> {
    let d = read(path)?;
    if d.n_features() > model.n_features {
        return Err(crate::L3Error::DimensionMismatch { expected: model.n_features, got: d.n_features() });
    }
    d.with_n_features(model.n_features)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let d = read(&a.data)?;
    let cfg = a.shape.config(a.cost);
    let t0 = Instant::now();
    let (model, reports) = model::train_detailed(&d, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    model::save_file(&model, &a.model)?;
    println!("m={} n={} K={} L={} classes={}", d.len(), d.n_features(), model.k(), model.l(), model.classes.len());
    for r in &reports {
        println!(
            "class={} sv={} objective={:.6e} gap={:.3e} epochs={}",
            r.class, r.stats.support_vectors, r.stats.primal_objective, r.stats.duality_gap, r.stats.epochs
        );
    }
    println!("train_seconds={secs:.6}");
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = model::load_file(&a.model)?;
    let d = read_for(&a.data, &model)?;
    let preds = model::predict_dataset(&model, &d)?;
    let mut text = String::with_capacity(preds.len() * 3);
    for p in preds {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    match a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = model::load_file(&a.model)?;
    let d = read_for(&a.data, &model)?;
    println!("accuracy={:.6}", model::evaluate(&model, &d)?);
    Ok(())
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let d = read(&a.data)?;
    let template = a.shape.config(1.0);
    let grid = CvGrid {
        costs: a.grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
        gammas: a.gamma_grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
    };
    let (best, report) = model::cross_validate(&d, &template, a.folds as usize, &grid)?;
    println!("{:>12} {:>12} {:>10} {:>10}", "cost", "gamma", "mean_acc", "std_acc");
    for p in &report.points {
        let gamma = p.gamma.map_or_else(|| "-".to_string(), |g| format!("{g:e}"));
        println!("{:>12e} {:>12} {:>10.6} {:>10.6}", p.cost, gamma, p.mean, p.std);
    }
    let sel = report.best();
    println!("selected cost={:e} gamma={} mean_acc={:.6} ({})", sel.cost, sel.gamma.map_or("-".into(), |g| format!("{g:e}")), sel.mean, report.rule);
    if let Some(path) = a.model {
        let model = model::train(&d, &best)?;
        model::save_file(&model, path)?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let d = match a.kind {
        SynthKind::Xor => dataio::gen_xor(a.n as usize, a.seed)?,
        SynthKind::Swissroll => dataio::gen_swissroll(a.n as usize, a.seed)?,
    };
    dataio::write_libsvm_file(&d, &a.out)
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let model = model::load_file(&a.model)?;
    let d = read_for(&a.data, &model)?;
    let reports = bounds::model_bounds(&model, &d, a.cost, a.delta)?;
    print!("{}", bounds::reports_table(&reports));
    if let Some(path) = a.json {
        std::fs::write(path, bounds::reports_document(&reports)?)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let train = read(&a.data_train)?;
    let test = read(&a.data_test)?;
    let n = train.n_features().max(test.n_features());
    let train = train.with_n_features(n)?;
    let test = test.with_n_features(n)?;
    let name = a.name.unwrap_or_else(|| {
        a.data_train.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
    });
    let projection = match a.projection {
        ProjectionArg::Linear => Projection::Linear,
        ProjectionArg::Rbf => Projection::Rbf { gamma: a.gamma },
    };
    let opts = bench::BenchOptions {
        name,
        clusters: a.clusters as usize,
        landmarks: a.landmarks.map_or(vec![None], |v| v.into_iter().map(|l| Some(l as usize)).collect()),
        landmark_method: a.landmark_method.into(),
        projection,
        seeds: a.seeds,
        cost: a.cost,
        folds: a.folds as usize,
        grid: CvGrid { costs: a.grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()), gammas: DEFAULT_GRID.to_vec() },
        baseline: !a.no_baseline,
        ..Default::default()
    };
    let results = bench::run_bench(&train, &test, &opts)?;
    let rows: Vec<bench::BenchRow> = results.iter().map(|r| r.row.clone()).collect();
    for r in &results {
        println!(
            "{} seed={} K={} L={} cost={:e} accuracy={:.4} train_s={:.4} test_s={:.4} model_bytes={}",
            r.row.dataset, r.row.seed, r.row.k, r.row.l, r.row.cost, r.row.accuracy, r.row.train_s, r.row.test_s, r.model_bytes
        );
    }
    print!("{}", bench::summary_table(&rows));
    if let Some(path) = a.out {
        std::fs::write(path, bench::write_csv(&rows)?)?;
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let cfg = L3Config { tol: a.shape.tol.min(1e-9), max_epochs: 1_000_000, ..a.shape.config(a.cost) };
    let gen_xor = |m: usize, s: u64| dataio::gen_xor(m, s);
    let gen_swiss = |m: usize, s: u64| dataio::gen_swissroll(m.max(2), s);
    let generator: &(dyn Fn(usize, u64) -> Result<Dataset> + Sync) = match a.generator {
        SynthKind::Xor => &gen_xor,
        SynthKind::Swissroll => &gen_swiss,
    };
    let (d, pool) = match (&a.data, &a.pool) {
        (Some(data), Some(pool)) => (read(data)?, Some(read(pool)?)),
        (None, _) => (generator(a.m as usize, a.shape.seed)?, None),
        (Some(_), None) => return Err(crate::L3Error::param("real data needs a held-out --pool")),
    };
    let source = match &pool {
        Some(p) => ReplacementSource::Pool(p),
        None => ReplacementSource::Generator(generator),
    };
    let report = bounds::stability_audit(&d, &cfg, a.trials, a.probes, a.shape.seed, source)?;
    println!("m={} trials={} probes={}", d.len(), report.trials, report.probes);
    println!("R_x={:.6} M={:.6}", report.r_x, report.big_m);
    println!("max_loss_difference={:.6e}", report.max_difference);
    println!("stability_cap={:.6e}", report.cap);
    println!("max_weight_norm_sq={:.6e} (2c={:.6e})", report.max_weight_norm_sq, 2.0 * a.cost);
    println!("max_train_hinge={:.6} (cap {:.6})", report.max_train_hinge, report.hinge_cap);
    println!("within_cap={}", report.max_difference <= report.cap + 1e-3);
    Ok(())
}
