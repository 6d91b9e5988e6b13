//! Independent reference computations used by the integration and acceptance
//! tests. Nothing here calls into the solver module.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bias-augmented linear SVM by dual coordinate descent on dense inputs:
/// min 1/2 (|w|^2 + b^2) + (c/m) sum hinge(y (w.x + b)).
pub fn linear_svm(x: &[Vec<f64>], y: &[f64], cost: f64, tol: f64, max_epochs: usize, seed: u64) -> (Vec<f64>, f64) {
    let m = x.len();
    let n = x[0].len();
    let upper = cost / m as f64;
    let qd: Vec<f64> = x.iter().map(|xi| xi.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        let mut worst = 0.0f64;
        for &i in &order {
            let g = y[i] * (dot(&w, &x[i]) + b) - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= upper {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg != 0.0 {
                let next = (a - g / qd[i]).clamp(0.0, upper);
                let step = (next - a) * y[i];
                w.iter_mut().zip(&x[i]).for_each(|(wj, v)| *wj += step * v);
                b += step;
                alpha[i] = next;
            }
        }
        if worst < tol {
            break;
        }
    }
    (w, b)
}

/// Soft-margin SVM whose offset is not regularized:
/// min 1/2 |w|^2 + (c/m) sum hinge(y (w.x + b)).
///
/// Solved through its dual (box plus `sum alpha_i y_i = 0`) by a primal-dual
/// interior-point method; the offset is the multiplier of the equality.
/// Returns `(w, b)`.
pub fn unregularized_offset_svm(x: &[Vec<f64>], y: &[f64], cost: f64) -> (Vec<f64>, f64) {
    let m = x.len();
    let u = cost / m as f64;
    let q = DMatrix::from_fn(m, m, |i, j| y[i] * y[j] * dot(&x[i], &x[j]));
    let mut alpha = DVector::from_element(m, 0.5 * u);
    let mut z1 = DVector::from_element(m, 1.0);
    let mut z2 = DVector::from_element(m, 1.0);
    let mut nu = 0.0;
    let yv = DVector::from_column_slice(y);
    for _ in 0..200 {
        let gap = alpha.dot(&z1) + (u * DVector::from_element(m, 1.0) - &alpha).dot(&z2);
        let rd = &q * &alpha - DVector::from_element(m, 1.0) + &yv * nu - &z1 + &z2;
        let rp = yv.dot(&alpha);
        if gap < 1e-14 * m as f64 && rd.amax() < 1e-13 && rp.abs() < 1e-14 {
            break;
        }
        let mu = 0.1 * gap / (2 * m) as f64;
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for i in 0..m {
            let s2 = u - alpha[i];
            for j in 0..m {
                kkt[(i, j)] = q[(i, j)];
            }
            kkt[(i, i)] += z1[i] / alpha[i] + z2[i] / s2;
            kkt[(i, m)] = y[i];
            kkt[(m, i)] = y[i];
            rhs[i] = -rd[i] + (mu - alpha[i] * z1[i]) / alpha[i] - (mu - s2 * z2[i]) / s2;
        }
        rhs[m] = -rp;
        let step = kkt.lu().solve(&rhs).expect("nonsingular KKT system");
        let da = step.rows(0, m).into_owned();
        let dnu = step[m];
        let dz1 = DVector::from_fn(m, |i, _| (mu - alpha[i] * z1[i] - z1[i] * da[i]) / alpha[i]);
        let dz2 = DVector::from_fn(m, |i, _| (mu - (u - alpha[i]) * z2[i] + z2[i] * da[i]) / (u - alpha[i]));
        let mut t = 1.0f64;
        for i in 0..m {
            if da[i] < 0.0 {
                t = t.min(-alpha[i] / da[i]);
            }
            if da[i] > 0.0 {
                t = t.min((u - alpha[i]) / da[i]);
            }
            if dz1[i] < 0.0 {
                t = t.min(-z1[i] / dz1[i]);
            }
            if dz2[i] < 0.0 {
                t = t.min(-z2[i] / dz2[i]);
            }
        }
        let t = (0.99 * t).min(1.0);
        alpha += t * da;
        z1 += t * dz1;
        z2 += t * dz2;
        nu += t * dnu;
    }
    let mut w = vec![0.0; x[0].len()];
    for i in 0..m {
        w.iter_mut().zip(&x[i]).for_each(|(wj, v)| *wj += alpha[i] * y[i] * v);
    }
    (w, nu)
}

/// Dense block layout of a point of cluster `k`: `mu` at `[k L, (k+1) L)`.
pub fn dense_block(k: usize, n_clusters: usize, mu: &[f64]) -> Vec<f64> {
    let l = mu.len();
    let mut v = vec![0.0; n_clusters * l];
    v[k * l..(k + 1) * l].copy_from_slice(mu);
    v
}

/// Primal and dual values of the bias-regularized problem on dense vectors
/// `z_i = [phi_i, 1]`.
pub fn objectives(z: &[Vec<f64>], y: &[f64], alpha: &[f64], w: &[f64], cost: f64) -> (f64, f64) {
    let m = z.len() as f64;
    let loss: f64 = z.iter().zip(y).map(|(zi, yi)| (1.0 - yi * dot(w, zi)).max(0.0)).sum();
    let primal = 0.5 * dot(w, w) + cost / m * loss;
    let mut v = vec![0.0; w.len()];
    for ((zi, yi), ai) in z.iter().zip(y).zip(alpha) {
        v.iter_mut().zip(zi).for_each(|(s, t)| *s += ai * yi * t);
    }
    let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&v, &v);
    (primal, dual)
}

/// Locally separable two-cluster problem: the sign of `x_0` picks the cluster
/// and each cluster has its own separating line. Points closer than `gap` to
/// their line are rejected.
pub fn piecewise_separable(m: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            (t.cos(), t.sin(), rng.random::<f64>() * 0.4 - 0.2)
        })
        .collect();
    let (mut xs, mut ks, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    while xs.len() < m {
        let p = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
        let k = usize::from(p[0] >= 0.0);
        let (a, b, c) = lines[k];
        let s = a * p[0] + b * p[1] + c;
        if s.abs() < gap {
            continue;
        }
        xs.push(p.to_vec());
        ks.push(k);
        ys.push(s.signum());
    }
    if ys.iter().all(|&v| v == ys[0]) {
        return piecewise_separable(m, gap, seed.wrapping_add(1));
    }
    (xs, ks, ys)
}

/// Generalization bound evaluated from scratch.
pub fn bound(emp: f64, c: f64, l: f64, big_m: f64, m: f64, delta: f64) -> f64 {
    let s = c * l * big_m * big_m / m;
    emp + s + (2.0 * s + 1.0 + 2.0 * c * l.sqrt() * big_m) * ((1.0 / delta).ln() / (2.0 * m)).sqrt()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
