//! Datasets, LIBSVM sparse text I/O, standardization, fold splitting and the
//! two synthetic 2D distributions (XOR and swiss-roll).
//!
//! LIBSVM lines look like `label idx:val idx:val ...` with strictly increasing
//! 1-based indices. Indices are stored 0-based in memory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{L3Error, Result};

/// One labeled sparse example.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// `(index, value)` pairs, 0-based, strictly increasing index.
    pub features: Vec<(usize, f64)>,
    pub label: i32,
    pub cluster: Option<usize>,
}

impl Instance {
    pub fn new(features: Vec<(usize, f64)>, label: i32) -> Self {
        Instance { features, label, cluster: None }
    }

    pub fn from_dense(x: &[f64], label: i32) -> Self {
        let features = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        Instance::new(features, label)
    }

    pub fn to_dense(&self, n_features: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_features];
        for &(i, v) in &self.features {
            if i < n_features {
                x[i] = v;
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Instance>,
    n_features: usize,
    classes: Vec<i32>,
}

impl Dataset {
    /// Validates the instances and derives the sorted class list.
    pub fn new(instances: Vec<Instance>, n_features: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(L3Error::EmptyDataset);
        }
        if n_features == 0 {
            return Err(L3Error::param("n_features must be positive"));
        }
        for inst in &instances {
            let mut prev: Option<usize> = None;
            for &(i, v) in &inst.features {
                if i >= n_features {
                    return Err(L3Error::DimensionMismatch { expected: n_features, got: i + 1 });
                }
                if prev.is_some_and(|p| i <= p) {
                    return Err(L3Error::param("feature indices must be strictly increasing"));
                }
                if !v.is_finite() {
                    return Err(L3Error::NonFinite("feature value"));
                }
                prev = Some(i);
            }
        }
        let mut classes: Vec<i32> = instances.iter().map(|x| x.label).collect();
        classes.sort_unstable();
        classes.dedup();
        Ok(Dataset { instances, n_features, classes })
    }

    pub fn from_dense(rows: &[Vec<f64>], labels: &[i32]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(L3Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(L3Error::Shape("rows of unequal length".into()));
        }
        let instances = rows.iter().zip(labels).map(|(r, &y)| Instance::from_dense(r, y)).collect();
        Dataset::new(instances, n)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn classes(&self) -> &[i32] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<i32> {
        self.instances.iter().map(|x| x.label).collect()
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        self.instances.iter().map(|x| x.to_dense(self.n_features)).collect()
    }

    /// Returns a copy with a wider feature space; fails when shrinking.
    pub fn with_n_features(mut self, n_features: usize) -> Result<Self> {
        if n_features < self.n_features {
            return Err(L3Error::DimensionMismatch { expected: n_features, got: self.n_features });
        }
        self.n_features = n_features;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let instances = indices.iter().map(|&i| self.instances[i].clone()).collect();
        Dataset::new(instances, self.n_features)
    }
}

// ---------------------------------------------------------------------------
// LIBSVM text format

pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    parse_libsvm_with(text, None)
}

/// Parses LIBSVM text. `n_features` overrides the inferred dimension (it must
/// be at least the largest index seen).
pub fn parse_libsvm_with(text: &str, n_features: Option<usize>) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| L3Error::Parse { line: line_no, msg };
        if line.contains('#') {
            return Err(err("comments are not supported".into()));
        }
        let mut tokens = line.split_ascii_whitespace();
        let label_tok = tokens.next().ok_or_else(|| err("missing label".into()))?;
        let label = parse_label(label_tok).ok_or_else(|| err(format!("invalid label '{label_tok}'")))?;
        let mut features = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("malformed pair '{tok}'")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("invalid index '{idx}'")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(format!("non-increasing index {idx}")));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("non-numeric value '{val}'")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value '{tok}'")));
            }
            features.push((idx - 1, val));
            prev = idx;
        }
        max_index = max_index.max(prev);
        instances.push(Instance::new(features, label));
    }
    if instances.is_empty() {
        return Err(L3Error::EmptyDataset);
    }
    let n = match n_features {
        Some(n) if n < max_index => {
            return Err(L3Error::DimensionMismatch { expected: n, got: max_index });
        }
        Some(n) => n,
        None => max_index.max(1),
    };
    Dataset::new(instances, n)
}

fn parse_label(tok: &str) -> Option<i32> {
    if let Ok(v) = tok.parse::<i32>() {
        return Some(v);
    }
    let v: f64 = tok.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() <= i32::MAX as f64).then_some(v as i32)
}

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_libsvm(d: &Dataset) -> String {
    let mut out = String::new();
    for inst in &d.instances {
        write!(out, "{}", inst.label).unwrap();
        for &(i, v) in &inst.features {
            write!(out, " {}:{}", i + 1, fmt_real(v)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_libsvm_file(path: impl AsRef<Path>, n_features: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm_with(&text, n_features)
}

pub fn write_libsvm_file(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_libsvm(d))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-feature population standard deviation (absent entries count as 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub per_feature_std: Vec<f64>,
}

impl ScalingParams {
    pub fn identity(n_features: usize) -> Self {
        ScalingParams { per_feature_std: vec![1.0; n_features] }
    }

    pub fn n_features(&self) -> usize {
        self.per_feature_std.len()
    }

    pub fn scale_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.per_feature_std.len() {
            return Err(L3Error::DimensionMismatch { expected: self.per_feature_std.len(), got: x.len() });
        }
        Ok(x.iter().zip(&self.per_feature_std).map(|(&v, &s)| scale_one(v, s)).collect())
    }
}

#[inline]
fn scale_one(v: f64, std: f64) -> f64 {
    if std > 0.0 {
        v / std
    } else {
        v
    }
}

pub fn fit_scaling(d: &Dataset) -> Result<ScalingParams> {
    let m = d.len();
    if m < 2 {
        return Err(L3Error::param("fit_scaling needs at least 2 instances"));
    }
    let n = d.n_features;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for inst in &d.instances {
        for &(i, v) in &inst.features {
            sum[i] += v;
            count[i] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
    let mut sq = vec![0.0; n];
    for inst in &d.instances {
        for &(i, v) in &inst.features {
            let dv = v - mean[i];
            sq[i] += dv * dv;
        }
    }
    let per_feature_std = (0..n)
        .map(|i| {
            let zeros = (m - count[i]) as f64;
            let var = (sq[i] + zeros * mean[i] * mean[i]) / m as f64;
            var.sqrt()
        })
        .collect();
    Ok(ScalingParams { per_feature_std })
}

pub fn apply_scaling(d: &Dataset, p: &ScalingParams) -> Result<Dataset> {
    if d.n_features != p.per_feature_std.len() {
        return Err(L3Error::DimensionMismatch { expected: p.per_feature_std.len(), got: d.n_features });
    }
    let instances = d
        .instances
        .iter()
        .map(|inst| Instance {
            features: inst.features.iter().map(|&(i, v)| (i, scale_one(v, p.per_feature_std[i]))).collect(),
            label: inst.label,
            cluster: inst.cluster,
        })
        .collect();
    Ok(Dataset { instances, n_features: d.n_features, classes: d.classes.clone() })
}

// ---------------------------------------------------------------------------
// Cross-validation folds

/// Validation index sets of a `k`-fold split. Stratified by class when every
/// class has at least `k` members.
pub fn kfold_indices(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let m = d.len();
    if k < 2 || k > m {
        return Err(L3Error::param(format!("fold count {k} must lie in [2, {m}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stratify = d.classes.iter().all(|&c| d.instances.iter().filter(|x| x.label == c).count() >= k);
    let order: Vec<usize> = if stratify {
        let mut order = Vec::with_capacity(m);
        for &c in &d.classes {
            let mut idx: Vec<usize> = (0..m).filter(|&i| d.instances[i].label == c).collect();
            idx.shuffle(&mut rng);
            order.extend(idx);
        }
        order
    } else {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut rng);
        idx
    };
    let mut folds = vec![Vec::with_capacity(m / k + 1); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// `(train, validation)` pairs.
pub fn kfold_split(d: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = kfold_indices(d, k, seed)?;
    folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; d.len()];
            val.iter().for_each(|&i| in_val[i] = true);
            let train: Vec<usize> = (0..d.len()).filter(|&i| !in_val[i]).collect();
            Ok((d.subset(&train)?, d.subset(val)?))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic distributions

/// Products below this magnitude are resampled.
pub const XOR_MARGIN: f64 = 1e-9;

pub fn xor_label(x1: f64, x2: f64) -> i32 {
    if x1 * x2 > 0.0 {
        1
    } else {
        -1
    }
}

/// Uniform points on `[-1, 1]^2`, labeled `+1` when both coordinates share a sign.
pub fn gen_xor(m: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(L3Error::param("m must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..m)
        .map(|_| loop {
            let x1: f64 = rng.random_range(-1.0..=1.0);
            let x2: f64 = rng.random_range(-1.0..=1.0);
            if (x1 * x2).abs() >= XOR_MARGIN {
                break Instance::from_dense(&[x1, x2], xor_label(x1, x2));
            }
        })
        .collect();
    Dataset::new(instances, 2)
}

/// Swiss-roll generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwissRollParams {
    pub t_min: f64,
    pub t_max: f64,
    pub noise_std: f64,
}

impl Default for SwissRollParams {
    fn default() -> Self {
        SwissRollParams { t_min: 1.5 * PI, t_max: 4.5 * PI, noise_std: 0.02 }
    }
}

impl SwissRollParams {
    /// Noiseless spiral point for parameter `t`, scaled into the unit disc.
    pub fn spiral_point(&self, t: f64) -> [f64; 2] {
        [t * t.cos() / self.t_max, t * t.sin() / self.t_max]
    }
}

/// Spiral (`+1`) against uniform square (`-1`); even positions are `+1`, so the
/// classes have `ceil(m/2)` and `floor(m/2)` members.
pub fn gen_swissroll(m: usize, seed: u64) -> Result<Dataset> {
    gen_swissroll_with(m, seed, SwissRollParams::default())
}

pub fn gen_swissroll_with(m: usize, seed: u64, p: SwissRollParams) -> Result<Dataset> {
    if m < 2 {
        return Err(L3Error::param("m must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, p.noise_std).map_err(|e| L3Error::param(e.to_string()))?;
    let instances = (0..m)
        .map(|i| {
            if i % 2 == 0 {
                let t = rng.random_range(p.t_min..=p.t_max);
                let [a, b] = p.spiral_point(t);
                let x = [a + noise.sample(&mut rng), b + noise.sample(&mut rng)];
                Instance::from_dense(&x, 1)
            } else {
                let x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                Instance::from_dense(&x, -1)
            }
        })
        .collect();
    Dataset::new(instances, 2)
}
