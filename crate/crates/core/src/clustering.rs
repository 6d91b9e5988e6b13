//! k-means partitioning (k-means++ seeding, Lloyd iterations) and
//! nearest-centroid assignment of unseen points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{L3Error, Result};
use crate::par;

const ASSIGN_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned centroid at convergence.
    pub inertia: f64,
    pub iterations: usize,
}

impl ClusterModel {
    /// Builds a model from given centroids; inertia is left at 0.
    pub fn from_centroids(centroids: Vec<Vec<f64>>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(L3Error::param("at least one centroid is required"));
        }
        let n = centroids[0].len();
        if centroids.iter().any(|c| c.len() != n) {
            return Err(L3Error::Shape("centroids of unequal dimension".into()));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(L3Error::NonFinite("centroid"));
        }
        Ok(ClusterModel { centroids, inertia: 0.0, iterations: 0 })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the closest centroid; lowest index wins ties.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn assign_all(centroids: &[Vec<f64>], points: &[Vec<f64>]) -> Vec<(usize, f64)> {
    par::map_chunks(points.len(), ASSIGN_CHUNK, |r| r.map(|i| nearest(centroids, &points[i])).collect())
}

pub fn assign(cm: &ClusterModel, x: &[f64]) -> Result<usize> {
    if x.len() != cm.dim() {
        return Err(L3Error::DimensionMismatch { expected: cm.dim(), got: x.len() });
    }
    Ok(nearest(&cm.centroids, x).0)
}

pub fn inertia(cm: &ClusterModel, points: &[Vec<f64>]) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| p.len() != cm.dim()) {
        return Err(L3Error::DimensionMismatch { expected: cm.dim(), got: p.len() });
    }
    Ok(assign_all(&cm.centroids, points).iter().map(|&(_, d)| d).sum())
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel> {
    kmeans_fit_traced(points, k, seed, max_iter, tol).map(|(cm, _)| cm)
}

/// Same as [`kmeans_fit`], also returning the inertia measured after every
/// assignment step (the last entry is the final inertia).
pub fn kmeans_fit_traced(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(ClusterModel, Vec<f64>)> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(L3Error::param(format!("cluster count {k} must lie in [1, {m}]")));
    }
    if max_iter == 0 {
        return Err(L3Error::param("max_iter must be at least 1"));
    }
    if !(tol >= 0.0) {
        return Err(L3Error::param("tol must be non-negative"));
    }
    let n = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(L3Error::DimensionMismatch { expected: n, got: p.len() });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(L3Error::NonFinite("k-means input"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut assignment = assign_all(&centroids, points);
        history.push(assignment.iter().map(|&(_, d)| d).sum());

        let mut sums = vec![vec![0.0; n]; k];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.iter().zip(&assignment) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }

        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                next[c] = sums[c].iter().map(|s| s * inv).collect();
            } else {
                // re-seed with the point farthest from its own centroid
                let far = (0..m)
                    .fold(None::<(usize, f64)>, |best, i| match best {
                        Some((_, d)) if assignment[i].1 <= d => best,
                        _ => Some((i, assignment[i].1)),
                    })
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                next[c] = points[far].clone();
                assignment[far].1 = -1.0;
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }

    let final_inertia: f64 = assign_all(&centroids, points).iter().map(|&(_, d)| d).sum();
    history.push(final_inertia);
    Ok((ClusterModel { centroids, inertia: final_inertia, iterations }, history))
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let m = points.len();
    let first = rng.random_range(0..m);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target == total; take the last weighted point
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            rng.random_range(0..m)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(per: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        (0..2 * per)
            .map(|i| {
                let cx = if i % 2 == 0 { 10.0 } else { -10.0 };
                vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = blobs(15, 2);
        let cm = kmeans_fit(&pts, 1, 0, 50, 0.0).unwrap();
        for j in 0..2 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
            assert!((cm.centroids[0][j] - mean).abs() < 1e-12);
        }
    }

    /// Exhaustive search over all 2-partitions of 20 points.
    fn best_two_partition(pts: &[Vec<f64>]) -> (f64, [Vec<f64>; 2]) {
        let m = pts.len();
        let mut best = (f64::INFINITY, [vec![], vec![]]);
        for mask in 1u32..(1 << (m - 1)) {
            let mut cents = [vec![0.0; 2], vec![0.0; 2]];
            let mut counts = [0usize; 2];
            for (i, p) in pts.iter().enumerate() {
                let g = ((mask >> i) & 1) as usize;
                counts[g] += 1;
                cents[g][0] += p[0];
                cents[g][1] += p[1];
            }
            for g in 0..2 {
                cents[g].iter_mut().for_each(|v| *v /= counts[g] as f64);
            }
            let cost: f64 = pts
                .iter()
                .enumerate()
                .map(|(i, p)| sq_dist(p, &cents[((mask >> i) & 1) as usize]))
                .sum();
            if cost < best.0 {
                best = (cost, cents);
            }
        }
        best
    }

    #[test]
    fn separated_blobs_match_exhaustive_partition() {
        let pts = blobs(10, 7);
        let (best_cost, best_cents) = best_two_partition(&pts);
        let cm = kmeans_fit(&pts, 2, 3, 100, 1e-12).unwrap();
        assert!((cm.inertia - best_cost).abs() < 1e-9);
        for target in [[10.0, 0.0], [-10.0, 0.0]] {
            assert!(cm.centroids.iter().any(|c| sq_dist(c, &target).sqrt() < 0.2));
            assert!(best_cents.iter().any(|c| sq_dist(c, &target).sqrt() < 0.2));
        }
    }

    #[test]
    fn k_equal_m_has_zero_inertia() {
        let pts = blobs(6, 1);
        let cm = kmeans_fit(&pts, pts.len(), 9, 10, 0.0).unwrap();
        assert_eq!(cm.inertia, 0.0);
    }

    #[test]
    fn duplicates_with_k_equal_m() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let cm = kmeans_fit(&pts, 5, 0, 10, 0.0).unwrap();
        assert_eq!(cm.inertia, 0.0);
        assert_eq!(cm.k(), 5);
    }

    #[test]
    fn assign_rules() {
        let cm = ClusterModel::from_centroids(vec![
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 5.0],
            vec![3.0, 3.0],
        ])
        .unwrap();
        assert_eq!(assign(&cm, &[3.0, 3.0]).unwrap(), 3);
        assert_eq!(assign(&cm, &[0.0, 0.0]).unwrap(), 0);
        assert!(matches!(assign(&cm, &[0.0]), Err(L3Error::DimensionMismatch { .. })));
        let single = ClusterModel::from_centroids(vec![vec![0.0]]).unwrap();
        assert_eq!(assign(&single, &[123.0]).unwrap(), 0);
    }

    #[test]
    fn inertia_examples() {
        let cm = ClusterModel::from_centroids(vec![vec![0.0, 0.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(inertia(&cm, &cm.centroids.clone()).unwrap(), 0.0);
        assert_eq!(inertia(&cm, &[vec![0.0, 2.0]]).unwrap(), 4.0);
        assert!(inertia(&cm, &[vec![0.0]]).is_err());

        let pts = blobs(40, 11);
        let fit = kmeans_fit(&pts, 5, 4, 100, 1e-10).unwrap();
        assert!((inertia(&fit, &pts).unwrap() - fit.inertia).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        let pts = blobs(2, 0);
        assert!(kmeans_fit(&pts, 5, 0, 10, 0.0).is_err());
        assert!(kmeans_fit(&pts, 0, 0, 10, 0.0).is_err());
        assert!(kmeans_fit(&pts, 2, 0, 0, 0.0).is_err());
        assert!(kmeans_fit(&[vec![f64::NAN]], 1, 0, 10, 0.0).is_err());
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let pts: Vec<Vec<f64>> = (0..3000).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let a = kmeans_fit(&pts, 12, 5, 30, 1e-9).unwrap();
        par::set_enabled(false);
        let b = kmeans_fit(&pts, 12, 5, 30, 1e-9).unwrap();
        par::set_enabled(true);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn inertia_never_increases(seed in any::<u64>(), k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
            let (_, hist) = kmeans_fit_traced(&pts, k, seed, 50, 0.0).unwrap();
            for w in hist.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", hist);
            }
        }

        #[test]
        fn assignment_follows_centroid_permutation(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cents: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let mut perm: Vec<usize> = (0..6).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            // permuted[perm[i]] = cents[i]
            let mut permuted = vec![vec![]; 6];
            for (i, &p) in perm.iter().enumerate() {
                permuted[p] = cents[i].clone();
            }
            let a = ClusterModel::from_centroids(cents).unwrap();
            let b = ClusterModel::from_centroids(permuted).unwrap();
            for _ in 0..50 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                prop_assert_eq!(perm[assign(&a, &x).unwrap()], assign(&b, &x).unwrap());
            }
        }
    }
}
