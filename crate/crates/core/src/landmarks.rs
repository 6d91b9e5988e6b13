//! Landmark selection, the landmark projection `mu(x) = [mu(x, l_1), ..., mu(x, l_L)]`
//! and the block feature map that places `mu(x)` in the slot of the point's
//! cluster, followed by a constant bias coordinate.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{L3Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// `mu(x, l) = <x, l>`
    Linear,
    /// `mu(x, l) = exp(-gamma * |x - l|^2)`
    Rbf { gamma: f64 },
}

impl Projection {
    pub fn name(&self) -> &'static str {
        match self {
            Projection::Linear => "linear",
            Projection::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Projection::Linear => None,
            Projection::Rbf { gamma } => Some(gamma),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], l: &[f64]) -> f64 {
        match *self {
            Projection::Linear => x.iter().zip(l).map(|(a, b)| a * b).sum(),
            Projection::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(l).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub landmarks: Vec<Vec<f64>>,
    pub projection: Projection,
}

impl LandmarkSet {
    pub fn new(landmarks: Vec<Vec<f64>>, projection: Projection) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(L3Error::param("at least one landmark is required"));
        }
        let n = landmarks[0].len();
        if landmarks.iter().any(|l| l.len() != n) {
            return Err(L3Error::Shape("landmarks of unequal dimension".into()));
        }
        if landmarks.iter().flatten().any(|v| !v.is_finite()) {
            return Err(L3Error::NonFinite("landmark"));
        }
        if let Projection::Rbf { gamma } = projection {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(L3Error::param(format!("RBF gamma must be positive, got {gamma}")));
            }
        }
        Ok(LandmarkSet { landmarks, projection })
    }

    /// The standard basis `e_1, ..., e_n`.
    pub fn standard_basis(n: usize, projection: Projection) -> Result<Self> {
        let landmarks = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        LandmarkSet::new(landmarks, projection)
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.landmarks[0].len()
    }
}

/// `L` distinct training inputs drawn uniformly without replacement.
pub fn select_random(points: &[Vec<f64>], l: usize, seed: u64, projection: Projection) -> Result<LandmarkSet> {
    let m = points.len();
    if l == 0 || l > m {
        return Err(L3Error::param(format!("landmark count {l} must lie in [1, {m}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, m, l);
    LandmarkSet::new(picked.iter().map(|i| points[i].clone()).collect(), projection)
}

/// Top-`L` unit eigenvectors of the mean-centered covariance of `points`,
/// ordered by decreasing eigenvalue, each signed so its largest-magnitude
/// entry is positive.
pub fn select_pca(points: &[Vec<f64>], l: usize, projection: Projection) -> Result<LandmarkSet> {
    let (vectors, _) = principal_axes(points)?;
    let n = vectors.len();
    if l == 0 || l > n {
        return Err(L3Error::param(format!("PCA landmark count {l} must lie in [1, {n}]")));
    }
    LandmarkSet::new(vectors.into_iter().take(l).collect(), projection)
}

/// All `n` principal axes and their eigenvalues, sorted by decreasing eigenvalue.
pub fn principal_axes(points: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = points.len();
    if m == 0 {
        return Err(L3Error::EmptyDataset);
    }
    let n = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(L3Error::DimensionMismatch { expected: n, got: p.len() });
    }
    let mut mean = vec![0.0; n];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    mean.iter_mut().for_each(|s| *s /= m as f64);

    let mut cov = DMatrix::<f64>::zeros(n, n);
    for p in points {
        let c: Vec<f64> = p.iter().zip(&mean).map(|(v, mu)| v - mu).collect();
        for i in 0..n {
            for j in i..n {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / m as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for &j in &order {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(v);
        values.push(eig.eigenvalues[j]);
    }
    Ok((vectors, values))
}

pub fn project(ls: &LandmarkSet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != ls.dim() {
        return Err(L3Error::DimensionMismatch { expected: ls.dim(), got: x.len() });
    }
    Ok(project_unchecked(ls, x))
}

pub(crate) fn project_unchecked(ls: &LandmarkSet, x: &[f64]) -> Vec<f64> {
    ls.landmarks.iter().map(|l| ls.projection.eval(x, l)).collect()
}

/// Logical vector of length `K*L + 1`: `block` at `[k*L, k*L + L)`, a 1 in the
/// last slot, zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFeature {
    pub cluster: usize,
    pub n_clusters: usize,
    pub block: Vec<f64>,
}

impl BlockFeature {
    pub fn new(cluster: usize, n_clusters: usize, block: Vec<f64>) -> Result<Self> {
        if cluster >= n_clusters {
            return Err(L3Error::param(format!("cluster {cluster} out of range for K = {n_clusters}")));
        }
        Ok(BlockFeature { cluster, n_clusters, block })
    }

    pub fn n_landmarks(&self) -> usize {
        self.block.len()
    }

    pub fn dim(&self) -> usize {
        self.n_clusters * self.block.len() + 1
    }

    pub fn bias_index(&self) -> usize {
        self.dim() - 1
    }

    fn offset(&self) -> usize {
        self.cluster * self.block.len()
    }

    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        let o = self.offset();
        let s: f64 = w[o..o + self.block.len()].iter().zip(&self.block).map(|(a, b)| a * b).sum();
        s + w[self.bias_index()]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.block.iter().map(|v| v * v).sum::<f64>() + 1.0
    }

    /// `w += scale * phi`
    #[inline]
    pub fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        let o = self.offset();
        let b = self.bias_index();
        w[o..o + self.block.len()].iter_mut().zip(&self.block).for_each(|(wi, v)| *wi += scale * v);
        w[b] += scale;
    }

    pub fn inner(&self, other: &BlockFeature) -> f64 {
        let same: f64 = if self.cluster == other.cluster {
            self.block.iter().zip(&other.block).map(|(a, b)| a * b).sum()
        } else {
            0.0
        };
        same + 1.0
    }

    pub fn nnz(&self) -> usize {
        self.block.iter().filter(|v| **v != 0.0).count() + 1
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let o = self.offset();
        v[o..o + self.block.len()].copy_from_slice(&self.block);
        v[self.dim() - 1] = 1.0;
        v
    }
}

pub fn feature_map(ls: &LandmarkSet, n_clusters: usize, cluster: usize, x: &[f64]) -> Result<BlockFeature> {
    let block = project(ls, x)?;
    BlockFeature::new(cluster, n_clusters, block)
}
