//! Train/test benchmark harness: repeated runs over seeds, a linear-SVM
//! baseline and CSV output.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::Result;
use crate::landmarks::Projection;
use crate::model::{self, CvGrid, L3Config, LandmarkMethod};

pub const CSV_HEADER: &str = "dataset,seed,K,L,projection,cost,accuracy,train_s,test_s";

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub projection: String,
    pub cost: f64,
    pub accuracy: f64,
    pub train_s: f64,
    pub test_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub row: BenchRow,
    pub config: L3Config,
    pub model_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub name: String,
    pub clusters: usize,
    /// Landmark counts to run; `None` entries mean "input dimension".
    pub landmarks: Vec<Option<usize>>,
    pub landmark_method: LandmarkMethod,
    pub projection: Projection,
    pub seeds: Vec<u64>,
    /// Fixed cost; when absent the cost (and gamma for RBF) is chosen by CV.
    pub cost: Option<f64>,
    pub folds: usize,
    pub grid: CvGrid,
    pub baseline: bool,
    pub tol: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            name: "data".into(),
            clusters: 1,
            landmarks: vec![None],
            landmark_method: LandmarkMethod::Random,
            projection: Projection::Linear,
            seeds: (1..=5).collect(),
            cost: None,
            folds: 5,
            grid: CvGrid::default(),
            baseline: true,
            tol: crate::solver::TRAIN_TOL,
        }
    }
}

pub const BASELINE_SUFFIX: &str = "+linear-svm";

/// Picks the configuration (CV unless a cost is fixed), trains on `train`
/// and times training and testing separately.
pub fn run_one(train: &Dataset, test: &Dataset, template: &L3Config, opts: &BenchOptions, name: &str) -> Result<BenchResult> {
    let cfg = match opts.cost {
        Some(c) => L3Config { cost: c, ..template.clone() },
        None => model::cross_validate(train, template, opts.folds, &opts.grid)?.0,
    };
    let t0 = Instant::now();
    let model = model::train(train, &cfg)?;
    let train_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let accuracy = model::evaluate(&model, test)?;
    let test_s = t1.elapsed().as_secs_f64();
    let model_bytes = model::save(&model)?.len();
    Ok(BenchResult {
        row: BenchRow {
            dataset: name.to_string(),
            seed: cfg.seed,
            k: model.k(),
            l: model.l(),
            projection: cfg.projection.name().to_string(),
            cost: cfg.cost,
            accuracy,
            train_s,
            test_s,
        },
        config: cfg,
        model_bytes,
    })
}

/// Every (landmark count, seed) run, followed by the baseline runs.
pub fn run_bench(train: &Dataset, test: &Dataset, opts: &BenchOptions) -> Result<Vec<BenchResult>> {
    let mut out = Vec::new();
    for &l in &opts.landmarks {
        for &seed in &opts.seeds {
            let template = L3Config {
                clusters: opts.clusters,
                landmarks: l,
                landmark_method: opts.landmark_method,
                projection: opts.projection,
                seed,
                tol: opts.tol,
                ..Default::default()
            };
            out.push(run_one(train, test, &template, opts, &opts.name)?);
        }
    }
    if opts.baseline {
        let name = format!("{}{BASELINE_SUFFIX}", opts.name);
        for &seed in &opts.seeds {
            let template = L3Config {
                clusters: 1,
                landmarks: None,
                landmark_method: LandmarkMethod::StandardBasis,
                projection: Projection::Linear,
                seed,
                tol: opts.tol,
                ..Default::default()
            };
            out.push(run_one(train, test, &template, opts, &name)?);
        }
    }
    Ok(out)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

/// Groups of rows sharing `(dataset, K, L, projection)`, in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<(String, usize, usize, String, Vec<&BenchRow>)> {
    let mut groups: Vec<(String, usize, usize, String, Vec<&BenchRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|g| g.0 == r.dataset && g.1 == r.k && g.2 == r.l && g.3 == r.projection) {
            Some(g) => g.4.push(r),
            None => groups.push((r.dataset.clone(), r.k, r.l, r.projection.clone(), vec![r])),
        }
    }
    groups
}

pub fn summary_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<28} {:>5} {:>5} {:>10} {:>6} {:>18} {:>16} {:>16}", "dataset", "K", "L", "projection", "runs", "accuracy(%)", "train_s", "test_s").unwrap();
    for (name, k, l, proj, g) in summarize(rows) {
        let acc: Vec<f64> = g.iter().map(|r| 100.0 * r.accuracy).collect();
        let tr: Vec<f64> = g.iter().map(|r| r.train_s).collect();
        let te: Vec<f64> = g.iter().map(|r| r.test_s).collect();
        let ((am, asd), (tm, tsd), (em, esd)) = (mean_std(&acc), mean_std(&tr), mean_std(&te));
        writeln!(
            s,
            "{name:<28} {k:>5} {l:>5} {proj:>10} {:>6} {:>10.2} ± {:<5.2} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            g.len(),
            am,
            asd,
            tm,
            tsd,
            em,
            esd
        )
        .unwrap();
    }
    s
}

pub fn write_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(crate::L3Error::Shape(format!("unexpected bench header '{}'", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
