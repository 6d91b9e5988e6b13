//! Soft-margin training over block features.
//!
//! Two solvers are provided:
//!
//! - [`solve_primal_dcd`] minimizes
//!   `F(w) = 1/2 |w|^2 + (c/m) * sum_i max(0, 1 - y_i <w, phi_i>)`
//!   where `phi_i` carries the constant bias coordinate, so the offset is
//!   regularized together with `theta`. It runs dual coordinate ascent on the
//!   box-constrained dual `0 <= alpha_i <= c/m` and keeps `w = sum alpha_i y_i phi_i`
//!   up to date incrementally. This is the training solver.
//! - [`solve_dual_reference`] solves the dual with an unregularized offset,
//!   i.e. with the extra equality `sum alpha_i y_i = 0`, by SMO pair updates on
//!   an explicit Gram matrix, then recovers `b` from the KKT conditions. It
//!   accepts any positive semi-definite Gram and serves as a verification
//!   oracle and for kernelized experiments.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{L3Error, Result};
use crate::landmarks::BlockFeature;

/// Largest problem accepted by [`solve_dual_reference`] by default.
pub const REFERENCE_MAX_M: usize = 2000;

/// Default stopping threshold for training runs.
pub const TRAIN_TOL: f64 = 1e-4;
/// Stopping threshold used by verification runs.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub cost: f64,
    /// Threshold on the largest projected-gradient (or KKT) violation.
    pub tol: f64,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { cost: 1.0, tol: TRAIN_TOL, max_epochs: 1000, shuffle_seed: 0 }
    }
}

impl SolverConfig {
    pub fn new(cost: f64) -> Self {
        SolverConfig { cost, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cost > 0.0 && self.cost.is_finite()) {
            return Err(L3Error::param(format!("cost must be positive, got {}", self.cost)));
        }
        if !(self.tol > 0.0) {
            return Err(L3Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_epochs == 0 {
            return Err(L3Error::param("max_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Per-cluster weights (`K x L`) and the shared offset.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub theta: Vec<Vec<f64>>,
    pub b: f64,
}

impl WeightVector {
    pub fn zeros(k: usize, l: usize) -> Self {
        WeightVector { theta: vec![vec![0.0; l]; k], b: 0.0 }
    }

    /// Unpacks `[theta_1., ..., theta_K., b]`.
    pub fn from_flat(w: &[f64], k: usize, l: usize) -> Self {
        assert_eq!(w.len(), k * l + 1, "flat weight length");
        WeightVector { theta: w[..k * l].chunks(l).map(<[f64]>::to_vec).collect(), b: w[k * l] }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.theta.iter().flatten().copied().collect();
        w.push(self.b);
        w
    }

    pub fn n_clusters(&self) -> usize {
        self.theta.len()
    }

    pub fn n_landmarks(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    /// `theta_k . mu + b`
    pub fn score(&self, cluster: usize, mu: &[f64]) -> f64 {
        self.theta[cluster].iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn decision(&self, phi: &BlockFeature) -> f64 {
        self.score(phi.cluster, &phi.block)
    }

    /// `|theta|_F^2 + b^2`
    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().flatten().map(|v| v * v).sum::<f64>() + self.b * self.b
    }

    pub fn theta_norm_sq(&self) -> f64 {
        self.theta.iter().flatten().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Slack multipliers `r_i = c/m - alpha_i`.
    pub r: Vec<f64>,
    pub objective_dual: f64,
}

impl DualSolution {
    fn new(alpha: Vec<f64>, upper: f64, objective_dual: f64) -> Self {
        let r = alpha.iter().map(|a| upper - a).collect();
        DualSolution { alpha, r, objective_dual }
    }

    pub fn support_vectors(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub epochs: usize,
    pub final_violation: f64,
    pub converged: bool,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub support_vectors: usize,
}

#[derive(Debug, Clone)]
pub struct DcdSolution {
    pub weights: WeightVector,
    /// The same weights in flat `[theta, b]` layout, as maintained by the solver.
    pub w: Vec<f64>,
    pub dual: DualSolution,
    pub stats: SolveStats,
}

fn check_problem(features: &[BlockFeature], labels: &[f64]) -> Result<(usize, usize)> {
    if features.is_empty() {
        return Err(L3Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(L3Error::Shape(format!("{} features but {} labels", features.len(), labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(L3Error::InvalidLabels(format!("expected +1/-1, found {y}")));
    }
    let (k, l) = (features[0].n_clusters, features[0].n_landmarks());
    for f in features {
        if f.n_clusters != k || f.n_landmarks() != l || f.cluster >= k {
            return Err(L3Error::Shape("inconsistent block features".into()));
        }
        if f.block.iter().any(|v| !v.is_finite()) {
            return Err(L3Error::NonFinite("feature"));
        }
    }
    Ok((k, l))
}

/// `sum_i alpha_i y_i phi_i` computed from scratch.
pub fn weights_from_alpha(features: &[BlockFeature], labels: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; features[0].dim()];
    for ((f, &y), &a) in features.iter().zip(labels).zip(alpha) {
        if a != 0.0 {
            f.add_scaled_to(&mut w, a * y);
        }
    }
    w
}

pub fn solve_primal_dcd(features: &[BlockFeature], labels: &[f64], cfg: &SolverConfig) -> Result<DcdSolution> {
    cfg.validate()?;
    let (k, l) = check_problem(features, labels)?;
    let m = features.len();
    let upper = cfg.cost / m as f64;

    let qd: Vec<f64> = features.iter().map(BlockFeature::norm_sq).collect();
    let mut alpha = vec![0.0; m];
    let mut w = vec![0.0; k * l + 1];
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);

    let mut epochs = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;
    while epochs < cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        violation = 0.0;
        for &i in &order {
            let y = labels[i];
            let g = y * features[i].dot(&w) - 1.0;
            let a = alpha[i];
            let pg = if a <= 0.0 {
                g.min(0.0)
            } else if a >= upper {
                g.max(0.0)
            } else {
                g
            };
            violation = violation.max(pg.abs());
            if pg != 0.0 {
                let next = (a - g / qd[i]).clamp(0.0, upper);
                debug_assert!((0.0..=upper).contains(&next));
                features[i].add_scaled_to(&mut w, (next - a) * y);
                alpha[i] = next;
            }
        }
        if violation < cfg.tol {
            converged = true;
            break;
        }
    }

    let w_exact = weights_from_alpha(features, labels, &alpha);
    let primal = objective_primal(&w, features, labels, cfg.cost)?;
    let dual_obj = alpha.iter().sum::<f64>() - 0.5 * dot(&w_exact, &w_exact);
    let dual = DualSolution::new(alpha, upper, dual_obj);
    let stats = SolveStats {
        epochs,
        final_violation: violation,
        converged,
        primal_objective: primal,
        dual_objective: dual_obj,
        duality_gap: primal - dual_obj,
        support_vectors: dual.support_vectors(),
    };
    Ok(DcdSolution { weights: WeightVector::from_flat(&w, k, l), w, dual, stats })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1/2 |w|^2 + (c/m) sum_i max(0, 1 - y_i <w, phi_i>)` with `w` in flat layout.
pub fn objective_primal(w: &[f64], features: &[BlockFeature], labels: &[f64], cost: f64) -> Result<f64> {
    check_problem(features, labels)?;
    if w.len() != features[0].dim() {
        return Err(L3Error::DimensionMismatch { expected: features[0].dim(), got: w.len() });
    }
    let m = features.len() as f64;
    let hinge: f64 = features.iter().zip(labels).map(|(f, &y)| (1.0 - y * f.dot(w)).max(0.0)).sum();
    Ok(0.5 * dot(w, w) + cost / m * hinge)
}

/// `sum alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j G_ij`. For the training
/// solver pass the bias-augmented Gram (`G_ij + 1`).
pub fn objective_dual(alpha: &[f64], gram: &Gram, labels: &[f64], cost: f64) -> Result<f64> {
    let m = gram.len();
    if alpha.len() != m || labels.len() != m {
        return Err(L3Error::Shape(format!("gram {m}x{m}, alpha {}, labels {}", alpha.len(), labels.len())));
    }
    if !(cost > 0.0) {
        return Err(L3Error::param("cost must be positive"));
    }
    let ya: Vec<f64> = alpha.iter().zip(labels).map(|(a, y)| a * y).collect();
    let quad: f64 = (0..m).map(|i| ya[i] * dot(gram.row(i), &ya)).sum();
    Ok(alpha.iter().sum::<f64>() - 0.5 * quad)
}

// ---------------------------------------------------------------------------
// Gram matrices

/// Dense symmetric `m x m` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    m: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = f(i, j);
                data[i * m + j] = v;
                data[j * m + i] = v;
            }
        }
        Gram { m, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(L3Error::Shape("gram must be square".into()));
        }
        Ok(Gram { m, data: rows.into_iter().flatten().collect() })
    }

    /// `<mu~(x_i), mu~(x_j)>`: block products, zero across clusters, no bias slot.
    pub fn block(features: &[BlockFeature]) -> Self {
        Gram::from_fn(features.len(), |i, j| features[i].inner(&features[j]) - 1.0)
    }

    /// Every entry plus 1, the Gram of the bias-augmented features.
    pub fn with_bias(&self) -> Self {
        Gram { m: self.m, data: self.data.iter().map(|v| v + 1.0).collect() }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }
}

// ---------------------------------------------------------------------------
// Reference dual solver (unregularized offset)

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub dual: DualSolution,
    pub b: f64,
    /// False when no free support vector existed and `b` is the midpoint of
    /// the KKT-feasible interval.
    pub b_from_free_svs: bool,
    pub iterations: usize,
    /// Final maximal-violating-pair gap.
    pub violation: f64,
    pub converged: bool,
}

pub fn solve_dual_reference(gram: &Gram, labels: &[f64], cfg: &SolverConfig) -> Result<ReferenceSolution> {
    solve_dual_reference_capped(gram, labels, cfg, REFERENCE_MAX_M)
}

pub fn solve_dual_reference_capped(
    gram: &Gram,
    labels: &[f64],
    cfg: &SolverConfig,
    max_m: usize,
) -> Result<ReferenceSolution> {
    cfg.validate()?;
    let m = gram.len();
    if m == 0 {
        return Err(L3Error::EmptyDataset);
    }
    if m > max_m {
        return Err(L3Error::param(format!("reference solver limited to {max_m} instances, got {m}")));
    }
    if labels.len() != m {
        return Err(L3Error::Shape(format!("gram {m}x{m} but {} labels", labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(L3Error::InvalidLabels(format!("expected +1/-1, found {y}")));
    }
    if gram.data.iter().any(|v| !v.is_finite()) {
        return Err(L3Error::NonFinite("gram"));
    }

    const TAU: f64 = 1e-12;
    let upper = cfg.cost / m as f64;
    let y = labels;
    let mut alpha = vec![0.0; m];
    // gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j G_ij
    let mut grad = vec![-1.0; m];
    let in_up = |a: f64, y: f64| (y > 0.0 && a < upper) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < upper);

    let max_iter = cfg.max_epochs.saturating_mul(m.max(10));
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..m {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..m {
            if in_low(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                if i != usize::MAX {
                    let diff = gmax - v;
                    if diff > 0.0 {
                        let curv = (gram.get(i, i) + gram.get(t, t) - 2.0 * gram.get(i, t)).max(TAU);
                        let score = -diff * diff / curv;
                        if score < best {
                            best = score;
                            j = t;
                        }
                    }
                }
            }
        }
        violation = if i == usize::MAX || gmin == f64::INFINITY { 0.0 } else { gmax - gmin };
        if violation < cfg.tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        // alpha_i += y_i t, alpha_j -= y_j t keeps sum alpha y fixed
        let diff = gmax + y[j] * grad[j];
        let curv = (gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j)).max(TAU);
        let cap_i = if y[i] > 0.0 { upper - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { upper - alpha[j] };
        let t = (diff / curv).min(cap_i).min(cap_j);
        if t <= 0.0 {
            break;
        }
        alpha[i] = if t == cap_i { if y[i] > 0.0 { upper } else { 0.0 } } else { alpha[i] + y[i] * t };
        alpha[j] = if t == cap_j { if y[j] > 0.0 { 0.0 } else { upper } } else { alpha[j] - y[j] * t };
        debug_assert!((0.0..=upper).contains(&alpha[i]) && (0.0..=upper).contains(&alpha[j]));
        let (gi, gj) = (gram.row(i), gram.row(j));
        for k in 0..m {
            grad[k] += t * y[k] * (gi[k] - gj[k]);
        }
    }

    let outputs = dual_outputs(gram, labels, &alpha);
    let (b, from_free) = recover_offset(&alpha, labels, &outputs, upper);
    let objective = objective_dual(&alpha, gram, labels, cfg.cost)?;
    Ok(ReferenceSolution {
        dual: DualSolution::new(alpha, upper, objective),
        b,
        b_from_free_svs: from_free,
        iterations,
        violation,
        converged,
    })
}

/// `o_i = sum_j alpha_j y_j G_ij`, the decision value without offset.
pub fn dual_outputs(gram: &Gram, labels: &[f64], alpha: &[f64]) -> Vec<f64> {
    let ya: Vec<f64> = alpha.iter().zip(labels).map(|(a, y)| a * y).collect();
    (0..gram.len()).map(|i| dot(gram.row(i), &ya)).collect()
}

/// Averages `y_a - o_a` over free support vectors; without any, returns the
/// midpoint of the interval of offsets satisfying the KKT conditions.
fn recover_offset(alpha: &[f64], labels: &[f64], outputs: &[f64], upper: f64) -> (f64, bool) {
    let free: Vec<f64> = (0..alpha.len())
        .filter(|&i| alpha[i] > 0.0 && alpha[i] < upper)
        .map(|i| labels[i] - outputs[i])
        .collect();
    if !free.is_empty() {
        return (free.iter().sum::<f64>() / free.len() as f64, true);
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..alpha.len() {
        let r = labels[i] - outputs[i];
        let at_zero = alpha[i] <= 0.0;
        // alpha = 0 needs y f >= 1, alpha = c/m needs y f <= 1
        if (labels[i] > 0.0) == at_zero {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    let b = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    };
    (b, false)
}

/// Largest `|alpha_i (y_i f_i - 1 + xi_i)|` and `|r_i xi_i|`, with
/// `f_i = o_i + b` and `xi_i = max(0, 1 - y_i f_i)`.
pub fn kkt_residuals(gram: &Gram, labels: &[f64], dual: &DualSolution, b: f64) -> (f64, f64) {
    let outputs = dual_outputs(gram, labels, &dual.alpha);
    let mut comp = 0.0f64;
    let mut slack = 0.0f64;
    for i in 0..gram.len() {
        let margin = labels[i] * (outputs[i] + b);
        let xi = (1.0 - margin).max(0.0);
        comp = comp.max((dual.alpha[i] * (margin - 1.0 + xi)).abs());
        slack = slack.max((dual.r[i] * xi).abs());
    }
    (comp, slack)
}

/// Weights rebuilt from dual variables, cluster by cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `theta_kp = sum_{a : k_a = k} alpha_a y_a mu(x_a, l_p)`, offset as supplied.
    pub weights: WeightVector,
    /// `(1/A) sum_a (y_a - theta_{k_a} . mu(x_a))` over all `A` support vectors.
    pub b_all_sv_average: Option<f64>,
}

pub fn reconstruct_theta(
    dual: &DualSolution,
    b: f64,
    features: &[BlockFeature],
    labels: &[f64],
) -> Result<Reconstruction> {
    let (k, l) = check_problem(features, labels)?;
    if dual.alpha.len() != features.len() {
        return Err(L3Error::Shape(format!("{} multipliers for {} instances", dual.alpha.len(), features.len())));
    }
    let mut weights = WeightVector::zeros(k, l);
    for ((f, &y), &a) in features.iter().zip(labels).zip(&dual.alpha) {
        if a > 0.0 {
            weights.theta[f.cluster].iter_mut().zip(&f.block).for_each(|(t, v)| *t += a * y * v);
        }
    }
    weights.b = 0.0;
    let svs: Vec<f64> = features
        .iter()
        .zip(labels)
        .zip(&dual.alpha)
        .filter(|(_, &a)| a > 0.0)
        .map(|((f, &y), _)| y - weights.decision(f))
        .collect();
    let b_all = (!svs.is_empty()).then(|| svs.iter().sum::<f64>() / svs.len() as f64);
    weights.b = b;
    Ok(Reconstruction { weights, b_all_sv_average: b_all })
}
