//! Uniform-stability constant, loss bound and generalization bound, plus an
//! empirical stability audit.
//!
//! With `M` the bound on `|mu(x, l)|` (`max(R_x^2, 1)` for the dot product,
//! `1` for RBF), the algorithm is `c L M^2 / m` uniformly stable and, with
//! probability `1 - delta`,
//!
//! ```text
//! R(f) <= R_emp(f) + c L M^2 / m + (2 c L M^2 / m + 1 + 2 c sqrt(L) M) sqrt(ln(1/delta) / (2m))
//! ```
//!
//! The loss constant `E = 1 + 2 c sqrt(L) M` is used as stated. The optimum
//! actually satisfies the tighter `1 + sqrt(2c) sqrt(L) M`, which is what
//! [`tight_loss_bound`] returns and what the audit checks.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataio::{fmt_real, Dataset, Instance};
use crate::error::{L3Error, Result};
use crate::landmarks::{BlockFeature, Projection};
use crate::model::{self, L3Config, L3Model, Representation};
use crate::par;
use crate::solver::{self, WeightVector};

pub fn compute_m(projection: Projection, r_x: f64) -> f64 {
    match projection {
        Projection::Linear => (r_x * r_x).max(1.0),
        Projection::Rbf { .. } => 1.0,
    }
}

/// `c L M^2 / m`
pub fn stability_constant(cost: f64, l: usize, big_m: f64, m: usize) -> f64 {
    cost * l as f64 * big_m * big_m / m as f64
}

/// `E = 1 + 2 c sqrt(L) M`
pub fn loss_bound_e(cost: f64, l: usize, big_m: f64) -> f64 {
    1.0 + 2.0 * cost * (l as f64).sqrt() * big_m
}

/// `1 + sqrt(2c) sqrt(L) M`, the hinge-loss cap implied by `|theta|^2 <= 2c`.
pub fn tight_loss_bound(cost: f64, l: usize, big_m: f64) -> f64 {
    1.0 + (2.0 * cost).sqrt() * (l as f64).sqrt() * big_m
}

pub fn generalization_bound(emp_risk: f64, cost: f64, l: usize, big_m: f64, m: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(L3Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if m == 0 {
        return Err(L3Error::param("m must be positive"));
    }
    let stab = stability_constant(cost, l, big_m, m);
    let e = loss_bound_e(cost, l, big_m);
    let conf = ((1.0 / delta).ln() / (2.0 * m as f64)).sqrt();
    Ok(emp_risk + stab + (2.0 * stab + e) * conf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub cost: f64,
    pub landmarks: usize,
    pub m: usize,
    pub delta: f64,
    pub projection: Projection,
    /// Largest input norm over the (standardized) training set.
    pub r_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub class: i32,
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub cost: f64,
    pub delta: f64,
    pub r_x: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub stability: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub empirical_risk: f64,
    pub bound: f64,
}

pub fn bound_report(inputs: &BoundInputs, emp_risk: f64, class: i32) -> Result<BoundReport> {
    let big_m = compute_m(inputs.projection, inputs.r_x);
    let bound = generalization_bound(emp_risk, inputs.cost, inputs.landmarks, big_m, inputs.m, inputs.delta)?;
    Ok(BoundReport {
        class,
        m: inputs.m,
        l: inputs.landmarks,
        cost: inputs.cost,
        delta: inputs.delta,
        r_x: inputs.r_x,
        big_m,
        stability: stability_constant(inputs.cost, inputs.landmarks, big_m, inputs.m),
        e: loss_bound_e(inputs.cost, inputs.landmarks, big_m),
        empirical_risk: emp_risk,
        bound,
    })
}

/// One report per binary task of `model`, with the empirical hinge risk
/// measured on `d` (normally the training sample). Models do not store their
/// cost, so it is supplied.
pub fn model_bounds(model: &L3Model, d: &Dataset, cost: f64, delta: f64) -> Result<Vec<BoundReport>> {
    let risks = model::hinge_risks(model, d)?;
    let inputs = BoundInputs {
        cost,
        landmarks: model.l(),
        m: d.len(),
        delta,
        projection: model.representation.landmarks.projection,
        r_x: model.representation.max_scaled_norm(d)?,
    };
    model.per_class.iter().zip(risks).map(|((class, _), r)| bound_report(&inputs, r, *class)).collect()
}

/// JSON document; reals carry 17 significant digits like model documents.
pub fn reports_document(reports: &[BoundReport]) -> Result<String> {
    let mut v = serde_json::to_value(reports)?;
    // re-emit every real through the 17-digit formatter
    fn fix(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Array(a) => a.iter_mut().for_each(fix),
            serde_json::Value::Object(o) => o.values_mut().for_each(fix),
            serde_json::Value::Number(n) if n.is_f64() => {
                let f = n.as_f64().unwrap();
                *v = serde_json::from_str(&fmt_real(f)).unwrap();
            }
            _ => {}
        }
    }
    fix(&mut v);
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "bounds": v }))?;
    s.push('\n');
    Ok(s)
}

pub fn reports_table(reports: &[BoundReport]) -> String {
    let mut s = String::new();
    writeln!(s, "{:>6} {:>8} {:>5} {:>10} {:>12} {:>12} {:>12} {:>12} {:>12}", "class", "m", "L", "cost", "M", "stability", "E", "emp_risk", "bound").unwrap();
    for r in reports {
        writeln!(
            s,
            "{:>6} {:>8} {:>5} {:>10.4e} {:>12.6} {:>12.6e} {:>12.6} {:>12.6} {:>12.6}",
            r.class, r.m, r.l, r.cost, r.big_m, r.stability, r.e, r.empirical_risk, r.bound
        )
        .unwrap();
    }
    s
}

// ---------------------------------------------------------------------------
// Stability audit

/// Where replacement and probe points come from.
#[derive(Clone, Copy)]
pub enum ReplacementSource<'a> {
    /// `generator(count, seed)`, e.g. [`crate::dataio::gen_xor`].
    Generator(&'a (dyn Fn(usize, u64) -> Result<Dataset> + Sync)),
    /// Held-out points drawn uniformly with replacement.
    Pool(&'a Dataset),
}

impl ReplacementSource<'_> {
    fn draw(&self, count: usize, seed: u64) -> Result<Vec<Instance>> {
        match *self {
            ReplacementSource::Generator(g) => Ok(g(count, seed)?.instances().to_vec()),
            ReplacementSource::Pool(pool) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..count).map(|_| pool.instances()[rng.random_range(0..pool.len())].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub trials: usize,
    pub probes: usize,
    /// Largest `|loss(f, z) - loss(f^i, z)|` seen.
    pub max_difference: f64,
    /// `c L M^2 / m`
    pub cap: f64,
    pub big_m: f64,
    pub r_x: f64,
    /// Largest `|theta|^2 + b^2` over the base and every perturbed optimum.
    pub max_weight_norm_sq: f64,
    /// Largest training hinge loss over those optima.
    pub max_train_hinge: f64,
    /// `1 + sqrt(2c) sqrt(L) M`
    pub hinge_cap: f64,
}

/// Solves the problem once on the full sample with a frozen representation and
/// re-solves it with single points replaced.
pub struct StabilityAuditor {
    cfg: L3Config,
    rep: Representation,
    positive: i32,
    features: Vec<BlockFeature>,
    labels: Vec<f64>,
    base: WeightVector,
    base_hinge: f64,
}

impl StabilityAuditor {
    pub fn new(d: &Dataset, cfg: &L3Config) -> Result<Self> {
        if cfg.tol > 1e-8 {
            return Err(L3Error::param(format!("stability audit needs solver tol <= 1e-8, got {}", cfg.tol)));
        }
        if d.classes().len() > 2 {
            return Err(L3Error::param("stability audit supports binary data only"));
        }
        let rep = Representation::fit(d, cfg)?;
        let positive = *d.classes().last().unwrap();
        let features = rep.embed_dataset(d)?;
        let labels: Vec<f64> = d.instances().iter().map(|x| if x.label == positive { 1.0 } else { -1.0 }).collect();
        let sol = solver::solve_primal_dcd(&features, &labels, &cfg.solver_config())?;
        let base_hinge = max_hinge(&sol.weights, &features, &labels);
        Ok(StabilityAuditor { cfg: cfg.clone(), rep, positive, features, labels, base: sol.weights, base_hinge })
    }

    pub fn representation(&self) -> &Representation {
        &self.rep
    }

    pub fn base_weights(&self) -> &WeightVector {
        &self.base
    }

    fn label_of(&self, x: &Instance) -> f64 {
        if x.label == self.positive {
            1.0
        } else {
            -1.0
        }
    }

    /// Embeds points for use as probes.
    pub fn embed(&self, points: &[Instance]) -> Result<Vec<(BlockFeature, f64)>> {
        let n = self.rep.n_features();
        points.iter().map(|x| Ok((self.rep.embed(&x.to_dense(n))?, self.label_of(x)))).collect()
    }

    /// Re-solves with training point `index` replaced by `replacement`.
    /// Returns the perturbed weights, the largest loss difference over
    /// `probes` and the largest training hinge loss of the perturbed optimum.
    pub fn replace_and_compare(
        &self,
        index: usize,
        replacement: &Instance,
        probes: &[(BlockFeature, f64)],
    ) -> Result<(WeightVector, f64, f64)> {
        let mut features = self.features.clone();
        let mut labels = self.labels.clone();
        features[index] = self.rep.embed(&replacement.to_dense(self.rep.n_features()))?;
        labels[index] = self.label_of(replacement);
        let sol = solver::solve_primal_dcd(&features, &labels, &self.cfg.solver_config())?;
        let diff = probes
            .iter()
            .map(|(phi, y)| (hinge(&self.base, phi, *y) - hinge(&sol.weights, phi, *y)).abs())
            .fold(0.0f64, f64::max);
        let train_hinge = max_hinge(&sol.weights, &features, &labels);
        Ok((sol.weights, diff, train_hinge))
    }
}

fn hinge(w: &WeightVector, phi: &BlockFeature, y: f64) -> f64 {
    (1.0 - y * w.decision(phi)).max(0.0)
}

fn max_hinge(w: &WeightVector, features: &[BlockFeature], labels: &[f64]) -> f64 {
    features.iter().zip(labels).map(|(f, &y)| hinge(w, f, y)).fold(0.0, f64::max)
}

fn scaled_norm(rep: &Representation, x: &Instance) -> Result<f64> {
    let s = rep.scaling.scale_dense(&x.to_dense(rep.n_features()))?;
    Ok(s.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Replaces a uniformly chosen training point `trials` times and records the
/// largest loss change over `probes` fresh points. Clustering, scaling and
/// landmarks are fit once on `d` and kept fixed.
pub fn stability_audit(
    d: &Dataset,
    cfg: &L3Config,
    trials: usize,
    probes: usize,
    seed: u64,
    source: ReplacementSource<'_>,
) -> Result<AuditReport> {
    let auditor = StabilityAuditor::new(d, cfg)?;
    let probe_points = source.draw(probes, seed)?;
    let probe_feats = auditor.embed(&probe_points)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let plan: Vec<(usize, u64)> = (0..trials).map(|_| (rng.random_range(0..d.len()), rng.random())).collect();
    let replacements: Vec<Instance> = plan
        .iter()
        .map(|&(_, s)| source.draw(1, s).map(|mut v| v.remove(0)))
        .collect::<Result<_>>()?;

    let outcomes = par::map_range(trials, |t| auditor.replace_and_compare(plan[t].0, &replacements[t], &probe_feats));
    let mut max_difference = 0.0f64;
    let mut max_weight_norm_sq = auditor.base.norm_sq();
    let mut max_train_hinge = auditor.base_hinge;
    for o in outcomes {
        let (w, diff, h) = o?;
        max_difference = max_difference.max(diff);
        max_weight_norm_sq = max_weight_norm_sq.max(w.norm_sq());
        max_train_hinge = max_train_hinge.max(h);
    }

    let rep = auditor.representation();
    let mut r_x = 0.0f64;
    for x in d.instances().iter().chain(&replacements).chain(&probe_points) {
        r_x = r_x.max(scaled_norm(rep, x)?);
    }
    let projection = rep.landmarks.projection;
    let big_m = compute_m(projection, r_x);
    Ok(AuditReport {
        trials,
        probes,
        max_difference,
        cap: stability_constant(cfg.cost, rep.l(), big_m, d.len()),
        big_m,
        r_x,
        max_weight_norm_sq,
        max_train_hinge,
        hinge_cap: tight_loss_bound(cfg.cost, rep.l(), big_m),
    })
}
