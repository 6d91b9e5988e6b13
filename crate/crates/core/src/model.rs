//! Training pipeline, prediction, cross-validation and model documents.
//!
//! Training standardizes the inputs, fits k-means, selects landmarks (all on
//! the standardized inputs), maps every point to its block feature and runs
//! the dual coordinate descent solver once per binary task. Multiclass data
//! is handled one-vs-all, with every binary task sharing the same clustering
//! and landmarks.

use serde::{Deserialize, Serialize, Serializer};

use crate::clustering::{self, ClusterModel};
use crate::dataio::{self, fmt_real, Dataset, ScalingParams};
use crate::error::{L3Error, Result};
use crate::landmarks::{self, BlockFeature, LandmarkSet, Projection};
use crate::par;
use crate::solver::{self, SolveStats, SolverConfig, WeightVector};

pub const FORMAT_VERSION: u32 = 1;

/// Values searched for the cost and, with RBF projection, for gamma.
pub const DEFAULT_GRID: [f64; 6] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkMethod {
    Random,
    Pca,
    /// `e_1, ..., e_n`; with one cluster and linear projection this is a plain
    /// linear SVM on the (standardized) inputs.
    StandardBasis,
}

impl LandmarkMethod {
    pub fn name(&self) -> &'static str {
        match self {
            LandmarkMethod::Random => "random",
            LandmarkMethod::Pca => "pca",
            LandmarkMethod::StandardBasis => "basis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L3Config {
    pub clusters: usize,
    /// Landmark count; `None` uses the input dimension.
    pub landmarks: Option<usize>,
    pub landmark_method: LandmarkMethod,
    pub projection: Projection,
    pub cost: f64,
    pub seed: u64,
    pub tol: f64,
    pub max_epochs: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Divide features by their standard deviation before anything else.
    pub standardize: bool,
}

impl Default for L3Config {
    fn default() -> Self {
        L3Config {
            clusters: 1,
            landmarks: None,
            landmark_method: LandmarkMethod::Random,
            projection: Projection::Linear,
            cost: 1.0,
            seed: 0,
            tol: solver::TRAIN_TOL,
            max_epochs: 1000,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
            standardize: true,
        }
    }
}

impl L3Config {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(L3Error::param("cluster count must be at least 1"));
        }
        if self.landmarks == Some(0) {
            return Err(L3Error::param("landmark count must be at least 1"));
        }
        self.solver_config().validate()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            cost: self.cost,
            tol: self.tol,
            max_epochs: self.max_epochs,
            shuffle_seed: self.seed.wrapping_add(0x5eed_0002),
        }
    }

    fn kmeans_seed(&self) -> u64 {
        self.seed
    }

    fn landmark_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5eed_0001)
    }
}

// ---------------------------------------------------------------------------
// Representation: scaling + clustering + landmarks

/// Everything needed to turn a raw input into its block feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub scaling: ScalingParams,
    pub clusters: ClusterModel,
    pub landmarks: LandmarkSet,
}

impl Representation {
    pub fn fit(d: &Dataset, cfg: &L3Config) -> Result<Self> {
        cfg.validate()?;
        let n = d.n_features();
        let m = d.len();
        let scaling = if cfg.standardize && m >= 2 { dataio::fit_scaling(d)? } else { ScalingParams::identity(n) };
        let rows: Vec<Vec<f64>> = d
            .instances()
            .iter()
            .map(|x| scaling.scale_dense(&x.to_dense(n)))
            .collect::<Result<_>>()?;
        if cfg.clusters > m {
            return Err(L3Error::param(format!("cluster count {} exceeds {m} instances", cfg.clusters)));
        }
        let clusters = clustering::kmeans_fit(&rows, cfg.clusters, cfg.kmeans_seed(), cfg.kmeans_max_iter, cfg.kmeans_tol)?;
        let l = cfg.landmarks.unwrap_or(n);
        let landmarks = match cfg.landmark_method {
            LandmarkMethod::Random => landmarks::select_random(&rows, l, cfg.landmark_seed(), cfg.projection)?,
            LandmarkMethod::Pca => landmarks::select_pca(&rows, l, cfg.projection)?,
            LandmarkMethod::StandardBasis => {
                if l != n {
                    return Err(L3Error::param(format!("standard basis needs L = n = {n}, got {l}")));
                }
                LandmarkSet::standard_basis(n, cfg.projection)?
            }
        };
        Ok(Representation { scaling, clusters, landmarks })
    }

    pub fn n_features(&self) -> usize {
        self.scaling.n_features()
    }

    pub fn k(&self) -> usize {
        self.clusters.k()
    }

    pub fn l(&self) -> usize {
        self.landmarks.len()
    }

    /// Scale, assign to the nearest centroid, project.
    pub fn embed(&self, x: &[f64]) -> Result<BlockFeature> {
        let xs = self.scaling.scale_dense(x)?;
        let k = clustering::assign(&self.clusters, &xs)?;
        landmarks::feature_map(&self.landmarks, self.k(), k, &xs)
    }

    /// Block features of every instance; instances may have fewer features
    /// than the representation (missing trailing features are zero).
    pub fn embed_dataset(&self, d: &Dataset) -> Result<Vec<BlockFeature>> {
        let n = self.n_features();
        if d.n_features() > n {
            return Err(L3Error::DimensionMismatch { expected: n, got: d.n_features() });
        }
        let inst = d.instances();
        par::map_chunks(inst.len(), 256, |r| r.map(|i| self.embed(&inst[i].to_dense(n))).collect())
            .into_iter()
            .collect()
    }

    /// Largest Euclidean norm of the standardized inputs.
    pub fn max_scaled_norm(&self, d: &Dataset) -> Result<f64> {
        let n = self.n_features();
        d.instances().iter().try_fold(0.0f64, |acc, x| {
            let s = self.scaling.scale_dense(&x.to_dense(n))?;
            Ok(acc.max(s.iter().map(|v| v * v).sum::<f64>().sqrt()))
        })
    }
}

// ---------------------------------------------------------------------------
// Model

#[derive(Debug, Clone, PartialEq)]
pub struct L3Model {
    pub representation: Representation,
    /// All class labels, ascending.
    pub classes: Vec<i32>,
    /// Binary: one entry for the positive (larger) class. Multiclass: one per class.
    pub per_class: Vec<(i32, WeightVector)>,
    pub n_features: usize,
    pub format_version: u32,
}

/// Solver outcome of one binary task.
#[derive(Debug, Clone)]
pub struct TaskReport {
    pub class: i32,
    pub stats: SolveStats,
}

/// Binary tasks: `(positive class, labels in {-1, +1})`.
fn binary_tasks(d: &Dataset) -> Vec<(i32, Vec<f64>)> {
    let classes = d.classes();
    let relabel = |pos: i32| d.instances().iter().map(|x| if x.label == pos { 1.0 } else { -1.0 }).collect();
    if classes.len() <= 2 {
        let pos = *classes.last().unwrap();
        vec![(pos, relabel(pos))]
    } else {
        classes.iter().map(|&c| (c, relabel(c))).collect()
    }
}

pub fn train(d: &Dataset, cfg: &L3Config) -> Result<L3Model> {
    train_detailed(d, cfg).map(|(m, _)| m)
}

pub fn train_detailed(d: &Dataset, cfg: &L3Config) -> Result<(L3Model, Vec<TaskReport>)> {
    let rep = Representation::fit(d, cfg)?;
    train_on(rep, d, cfg)
}

/// Trains with a given (frozen) representation.
pub fn train_on(rep: Representation, d: &Dataset, cfg: &L3Config) -> Result<(L3Model, Vec<TaskReport>)> {
    cfg.validate()?;
    let features = rep.embed_dataset(d)?;
    let tasks = binary_tasks(d);
    let scfg = cfg.solver_config();
    let solved = par::map_range(tasks.len(), |t| solver::solve_primal_dcd(&features, &tasks[t].1, &scfg));
    let mut per_class = Vec::with_capacity(tasks.len());
    let mut reports = Vec::with_capacity(tasks.len());
    for ((class, _), sol) in tasks.iter().zip(solved) {
        let sol = sol?;
        per_class.push((*class, sol.weights));
        reports.push(TaskReport { class: *class, stats: sol.stats });
    }
    let n_features = rep.n_features();
    Ok((
        L3Model { representation: rep, classes: d.classes().to_vec(), per_class, n_features, format_version: FORMAT_VERSION },
        reports,
    ))
}

impl L3Model {
    pub fn k(&self) -> usize {
        self.representation.k()
    }

    pub fn l(&self) -> usize {
        self.representation.l()
    }

    fn scores_for(&self, phi: &BlockFeature) -> Vec<f64> {
        self.per_class.iter().map(|(_, w)| w.decision(phi)).collect()
    }

    fn label_from_scores(&self, scores: &[f64]) -> i32 {
        if self.per_class.len() == 1 {
            let pos = self.per_class[0].0;
            if scores[0] >= 0.0 {
                pos
            } else {
                self.classes.iter().copied().find(|&c| c != pos).unwrap_or(pos)
            }
        } else {
            // per_class is in ascending label order, so the first maximum is the lowest label
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = i;
                }
            }
            self.per_class[best].0
        }
    }
}

/// Per-class scores of a raw (unscaled) dense input.
pub fn decision(model: &L3Model, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.n_features {
        return Err(L3Error::DimensionMismatch { expected: model.n_features, got: x.len() });
    }
    let phi = model.representation.embed(x)?;
    Ok(model.scores_for(&phi))
}

pub fn predict(model: &L3Model, x: &[f64]) -> Result<i32> {
    let scores = decision(model, x)?;
    Ok(model.label_from_scores(&scores))
}

pub fn predict_dataset(model: &L3Model, d: &Dataset) -> Result<Vec<i32>> {
    let features = model.representation.embed_dataset(d)?;
    Ok(features.iter().map(|phi| model.label_from_scores(&model.scores_for(phi))).collect())
}

pub fn evaluate(model: &L3Model, d: &Dataset) -> Result<f64> {
    let preds = predict_dataset(model, d)?;
    let correct = preds.iter().zip(d.instances()).filter(|(p, x)| **p == x.label).count();
    Ok(correct as f64 / d.len() as f64)
}

/// Mean hinge loss of each binary task on `d` (labels relabeled one-vs-all).
pub fn hinge_risks(model: &L3Model, d: &Dataset) -> Result<Vec<f64>> {
    let features = model.representation.embed_dataset(d)?;
    Ok(model
        .per_class
        .iter()
        .map(|(class, w)| {
            let total: f64 = features
                .iter()
                .zip(d.instances())
                .map(|(phi, x)| {
                    let y = if x.label == *class { 1.0 } else { -1.0 };
                    (1.0 - y * w.decision(phi)).max(0.0)
                })
                .sum();
            total / d.len() as f64
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Cross-validation

#[derive(Debug, Clone, PartialEq)]
pub struct CvGrid {
    pub costs: Vec<f64>,
    /// Only searched when the template uses an RBF projection.
    pub gammas: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid { costs: DEFAULT_GRID.to_vec(), gammas: DEFAULT_GRID.to_vec() }
    }
}

impl CvGrid {
    pub fn costs(costs: &[f64]) -> Self {
        CvGrid { costs: costs.to_vec(), ..Default::default() }
    }

    /// `(cost, gamma)` pairs in tie-break order: ascending cost, then gamma.
    fn points(&self, template: &L3Config) -> Vec<(f64, Option<f64>)> {
        let mut costs = self.costs.clone();
        costs.sort_by(f64::total_cmp);
        costs.dedup();
        match template.projection {
            Projection::Linear => costs.into_iter().map(|c| (c, None)).collect(),
            Projection::Rbf { .. } => {
                let mut gammas = self.gammas.clone();
                gammas.sort_by(f64::total_cmp);
                gammas.dedup();
                costs.iter().flat_map(|&c| gammas.iter().map(move |&g| (c, Some(g)))).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    pub cost: f64,
    pub gamma: Option<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub points: Vec<CvPoint>,
    pub selected: usize,
    pub rule: &'static str,
}

pub const CV_RULE: &str = "max mean accuracy; ties -> smaller cost, then smaller gamma";

impl CvReport {
    pub fn best(&self) -> &CvPoint {
        &self.points[self.selected]
    }
}

fn with_point(template: &L3Config, cost: f64, gamma: Option<f64>) -> L3Config {
    let mut cfg = template.clone();
    cfg.cost = cost;
    if let Some(g) = gamma {
        cfg.projection = Projection::Rbf { gamma: g };
    }
    cfg
}

/// Grid search with `folds`-fold cross-validation. Clustering and landmarks
/// are refit on the training part of every fold.
pub fn cross_validate(d: &Dataset, template: &L3Config, folds: usize, grid: &CvGrid) -> Result<(L3Config, CvReport)> {
    if folds < 2 {
        return Err(L3Error::param("at least 2 folds are required"));
    }
    let points = grid.points(template);
    if points.is_empty() {
        return Err(L3Error::param("empty grid"));
    }
    if points.iter().any(|&(c, g)| !(c > 0.0) || g.is_some_and(|g| !(g > 0.0))) {
        return Err(L3Error::param("grid values must be positive"));
    }
    let splits = dataio::kfold_split(d, folds, template.seed)?;
    let jobs = points.len() * folds;
    let accs = par::map_range(jobs, |job| -> Result<f64> {
        let (p, f) = (job / folds, job % folds);
        let cfg = with_point(template, points[p].0, points[p].1);
        let (train_d, val_d) = &splits[f];
        let model = train(train_d, &cfg)?;
        evaluate(&model, val_d)
    });
    let accs: Vec<f64> = accs.into_iter().collect::<Result<_>>()?;

    let mut report = CvReport { points: Vec::with_capacity(points.len()), selected: 0, rule: CV_RULE };
    for (p, &(cost, gamma)) in points.iter().enumerate() {
        let fold_accuracies = accs[p * folds..(p + 1) * folds].to_vec();
        let mean = fold_accuracies.iter().sum::<f64>() / folds as f64;
        let var = fold_accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / folds as f64;
        report.points.push(CvPoint { cost, gamma, fold_accuracies, mean, std: var.sqrt() });
        if report.points[p].mean > report.points[report.selected].mean {
            report.selected = p;
        }
    }
    let best = report.best();
    Ok((with_point(template, best.cost, best.gamma), report))
}

// ---------------------------------------------------------------------------
// Model documents

/// A real written with 17 significant digits.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(transparent)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error;
        if !self.0.is_finite() {
            return Err(S::Error::custom("non-finite value"));
        }
        let raw = serde_json::value::RawValue::from_string(fmt_real(self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn matrix(rows: &[Vec<f64>]) -> Vec<Vec<Real>> {
    rows.iter().map(|r| reals(r)).collect()
}

fn unreal(v: Vec<Real>) -> Vec<f64> {
    v.into_iter().map(|r| r.0).collect()
}

#[derive(Serialize, Deserialize)]
struct ProjectionDoc {
    kind: String,
    gamma: Option<Real>,
}

#[derive(Serialize, Deserialize)]
struct ClassWeightsDoc {
    class: i32,
    theta: Vec<Vec<Real>>,
    b: Real,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    n_features: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    projection: ProjectionDoc,
    per_feature_std: Vec<Real>,
    centroids: Vec<Vec<Real>>,
    landmarks: Vec<Vec<Real>>,
    classes: Vec<i32>,
    models: Vec<ClassWeightsDoc>,
}

pub fn save(model: &L3Model) -> Result<String> {
    let rep = &model.representation;
    let doc = ModelDocument {
        format_version: model.format_version,
        n_features: model.n_features,
        k: rep.k(),
        l: rep.l(),
        projection: ProjectionDoc {
            kind: rep.landmarks.projection.name().to_string(),
            gamma: rep.landmarks.projection.gamma().map(Real),
        },
        per_feature_std: reals(&rep.scaling.per_feature_std),
        centroids: matrix(&rep.clusters.centroids),
        landmarks: matrix(&rep.landmarks.landmarks),
        classes: model.classes.clone(),
        models: model
            .per_class
            .iter()
            .map(|(class, w)| ClassWeightsDoc { class: *class, theta: matrix(&w.theta), b: Real(w.b) })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

fn check_matrix(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<()> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        let got_c = rows.first().map_or(0, Vec::len);
        return Err(L3Error::Shape(format!("{name}: expected {r}x{c}, got {}x{got_c}", rows.len())));
    }
    Ok(())
}

pub fn load(document: &str) -> Result<L3Model> {
    let value: serde_json::Value = serde_json::from_str(document)?;
    let version = value.get("format_version").and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(L3Error::UnsupportedVersion { found: v as u32, supported: FORMAT_VERSION }),
        None => return Err(L3Error::Shape("missing format_version".into())),
    }
    let doc: ModelDocument = serde_json::from_value(value)?;
    let (n, k, l) = (doc.n_features, doc.k, doc.l);
    if n == 0 || k == 0 || l == 0 {
        return Err(L3Error::Shape("n_features, K and L must be positive".into()));
    }

    let per_feature_std = unreal(doc.per_feature_std);
    if per_feature_std.len() != n {
        return Err(L3Error::Shape(format!("per_feature_std has {} entries, expected {n}", per_feature_std.len())));
    }
    let centroids: Vec<Vec<f64>> = doc.centroids.into_iter().map(unreal).collect();
    check_matrix("centroids", &centroids, k, n)?;
    let lms: Vec<Vec<f64>> = doc.landmarks.into_iter().map(unreal).collect();
    check_matrix("landmarks", &lms, l, n)?;
    let projection = match (doc.projection.kind.as_str(), doc.projection.gamma) {
        ("linear", _) => Projection::Linear,
        ("rbf", Some(g)) => Projection::Rbf { gamma: g.0 },
        (kind, _) => return Err(L3Error::Shape(format!("unknown projection '{kind}'"))),
    };
    let mut per_class = Vec::with_capacity(doc.models.len());
    for m in doc.models {
        let theta: Vec<Vec<f64>> = m.theta.into_iter().map(unreal).collect();
        check_matrix("theta", &theta, k, l)?;
        if !m.b.0.is_finite() {
            return Err(L3Error::NonFinite("offset"));
        }
        per_class.push((m.class, WeightVector { theta, b: m.b.0 }));
    }

    let mut classes = doc.classes;
    if classes.is_empty() || classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(L3Error::Shape("classes must be non-empty, ascending and distinct".into()));
    }
    let expected_tasks = if classes.len() <= 2 { 1 } else { classes.len() };
    if per_class.len() != expected_tasks || per_class.iter().any(|(c, _)| !classes.contains(c)) {
        return Err(L3Error::Shape(format!("{} weight sets for {} classes", per_class.len(), classes.len())));
    }
    if per_feature_std.iter().chain(centroids.iter().flatten()).chain(lms.iter().flatten()).any(|v| !v.is_finite())
        || per_class.iter().any(|(_, w)| w.theta.iter().flatten().any(|v| !v.is_finite()))
    {
        return Err(L3Error::NonFinite("model document"));
    }
    classes.shrink_to_fit();

    let representation = Representation {
        scaling: ScalingParams { per_feature_std },
        clusters: ClusterModel::from_centroids(centroids)?,
        landmarks: LandmarkSet::new(lms, projection)?,
    };
    Ok(L3Model { representation, classes, per_class, n_features: n, format_version: FORMAT_VERSION })
}

pub fn save_file(model: &L3Model, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, save(model)?)?;
    Ok(())
}

pub fn load_file(path: impl AsRef<std::path::Path>) -> Result<L3Model> {
    load(&std::fs::read_to_string(path)?)
}
