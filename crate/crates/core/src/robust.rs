//! Joint fit of the max-ent multipliers λ and the per-demonstration trust
//! weights w.
//!
//! The objective is `J(λ, w) = −(1/M)·Σ_d w_d·c_d(λ)` over the polytope
//! `{0 ≤ w ≤ 1, Σ w = M}`, where `c_d = b_d − a_d` is the dual contribution
//! of demonstration `d` per unit weight (its average log-likelihood under
//! the induced policy). For fixed w, minimizing J over λ is the concave dual
//! ascent of [`crate::maxent`]; for fixed λ, minimizing over w is a linear
//! program solved exactly by [`weight_step`]. Alternating the two blocks
//! never increases J.

use serde::{Deserialize, Serialize};

use crate::domain::{DemoSet, FeatureMap};
use crate::empirical::{check_budget, demo_stats, weighted_mixture, DemoStats, WeightVector};
use crate::error::{Error, Result};
use crate::maxent::{extract_policy, fit_lambda_from, DualSolution, Policy, SolverOptions};

/// Relative tolerance under which two c_d values count as tied.
pub const TIE_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerDemoTerms {
    /// a_d = Σ_s p̃(s|d)·log z_λ(s)
    pub a: Vec<f64>,
    /// b_d = λ·E_{p̃(·,·|d)}[f]
    pub b: Vec<f64>,
    /// c_d = b_d − a_d
    pub c: Vec<f64>,
}

pub fn per_demo_terms(
    lambda: &[f64],
    stats: &[DemoStats],
    fm: &FeatureMap,
    log_z: &[f64],
) -> Result<PerDemoTerms> {
    if lambda.len() != fm.n_features() {
        return Err(Error::DimensionMismatch {
            context: "per_demo_terms lambda",
            expected: fm.n_features(),
            got: lambda.len(),
        });
    }
    if log_z.len() != fm.n_states() {
        return Err(Error::DimensionMismatch {
            context: "per_demo_terms log_z",
            expected: fm.n_states(),
            got: log_z.len(),
        });
    }
    let mut terms = PerDemoTerms {
        a: Vec::with_capacity(stats.len()),
        b: Vec::with_capacity(stats.len()),
        c: Vec::with_capacity(stats.len()),
    };
    for d in stats {
        if d.n_states() != fm.n_states() || d.feat_expect.len() != fm.n_features() {
            return Err(Error::DimensionMismatch {
                context: "per_demo_terms stats",
                expected: fm.n_features(),
                got: d.feat_expect.len(),
            });
        }
        let a: f64 = d.state_dist.iter().zip(log_z).map(|(p, lz)| p * lz).sum();
        let b: f64 = d.feat_expect.iter().zip(lambda).map(|(f, l)| f * l).sum();
        terms.a.push(a);
        terms.b.push(b);
        terms.c.push(b - a);
    }
    Ok(terms)
}

/// `−(1/M)·Σ_d w_d·c_d`
pub fn joint_objective(w: &WeightVector, c: &[f64]) -> f64 {
    -w.weights().iter().zip(c).map(|(w, c)| w * c).sum::<f64>() / w.budget()
}

fn tied(x: f64, y: f64) -> bool {
    (x - y).abs() <= TIE_REL_TOL * x.abs().max(y.abs())
}

/// Exact minimizer of `−(1/M)·Σ w_d·c_d` over `{0 ≤ w ≤ 1, Σ w = M}`.
///
/// Demos are filled in decreasing c_d order. A group of tied values that
/// straddles the budget shares what is left uniformly.
pub fn weight_step(c: &[f64], m: f64) -> Result<WeightVector> {
    let d = c.len();
    check_budget(m, d)?;
    if let Some(v) = c.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("c_d = {v}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| c[j].total_cmp(&c[i]));

    let mut w = vec![0.0; d];
    let mut remaining = m;
    let mut i = 0;
    while i < d && remaining > 0.0 {
        let leader = c[order[i]];
        let end = (i..d)
            .find(|&k| !tied(leader, c[order[k]]))
            .unwrap_or(d);
        let size = (end - i) as f64;
        let share = if size <= remaining { 1.0 } else { remaining / size };
        for &idx in &order[i..end] {
            w[idx] = share;
        }
        remaining -= share * size;
        i = end;
    }
    WeightVector::new(w, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustOptions {
    pub inner: SolverOptions,
    pub max_outer: usize,
    /// Outer loop stops once ‖w_new − w‖∞ drops below this.
    pub weight_tol: f64,
}

impl Default for RobustOptions {
    fn default() -> Self {
        RobustOptions {
            inner: SolverOptions::default(),
            max_outer: 50,
            weight_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub objective: f64,
    pub weights: Vec<f64>,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustModel {
    pub demo_ids: Vec<String>,
    pub dual: DualSolution,
    pub weights: WeightVector,
    /// Per-demo terms at the returned λ.
    pub terms: PerDemoTerms,
    pub objective: f64,
    pub history: Vec<OuterStep>,
    /// Weights reached a fixed point.
    pub converged: bool,
    /// Every inner dual solve met its tolerance.
    pub inner_converged: bool,
    /// The weight sequence revisited an earlier iterate without settling.
    pub oscillated: bool,
    /// Weighted state distribution of the returned weights.
    pub state_dist: Vec<f64>,
}

impl RobustModel {
    /// Max-ent policy with uniform rows on states the trusted demos never
    /// visit.
    pub fn policy(&self, fm: &FeatureMap) -> Result<Policy> {
        extract_policy(&self.dual.lambda, fm, &self.state_dist)
    }
}

pub fn fit_robust(
    demos: &DemoSet,
    fm: &FeatureMap,
    m: f64,
    opts: &RobustOptions,
) -> Result<RobustModel> {
    let stats = demos
        .demos()
        .iter()
        .map(|d| demo_stats(d, demos.task(), fm))
        .collect::<Result<Vec<_>>>()?;
    fit_robust_stats(&stats, fm, m, opts)
}

/// Alternating block minimization from uniform weights `M/D` and λ = 0.
/// Each inner solve is warm-started from the previous λ, so the λ block
/// never increases the objective either.
pub fn fit_robust_stats(
    stats: &[DemoStats],
    fm: &FeatureMap,
    m: f64,
    opts: &RobustOptions,
) -> Result<RobustModel> {
    let mut w = WeightVector::uniform(stats.len(), m)?;
    let mut lambda = vec![0.0; fm.n_features()];
    let mut history: Vec<OuterStep> = Vec::new();
    let mut visited: Vec<Vec<f64>> = vec![w.weights().to_vec()];
    let mut best: Option<(DualSolution, WeightVector, PerDemoTerms, f64)> = None;
    let mut converged = false;
    let mut oscillated = false;
    let mut inner_converged = true;

    for _ in 0..opts.max_outer {
        let ws = weighted_mixture(stats, &w)?;
        let sol = fit_lambda_from(&ws, fm, &opts.inner, &lambda)?;
        inner_converged &= sol.converged;
        let terms = per_demo_terms(&sol.lambda, stats, fm, &sol.log_z)?;
        let w_new = weight_step(&terms.c, m)?;
        let objective = joint_objective(&w_new, &terms.c);
        history.push(OuterStep {
            objective,
            weights: w_new.weights().to_vec(),
            inner_iterations: sol.iterations,
            inner_converged: sol.converged,
        });

        let settled = max_abs_diff(w.weights(), w_new.weights()) < opts.weight_tol;
        let cycled = !settled
            && visited
                .iter()
                .any(|prev| max_abs_diff(prev, w_new.weights()) < opts.weight_tol);
        lambda = sol.lambda.clone();
        if settled {
            converged = true;
            best = Some((sol, w_new, terms, objective));
            break;
        }
        if best.as_ref().is_none_or(|b| objective < b.3) {
            best = Some((sol, w_new.clone(), terms, objective));
        }
        if cycled {
            oscillated = true;
            break;
        }
        visited.push(w_new.weights().to_vec());
        w = w_new;
    }

    let (dual, weights, terms, objective) =
        best.ok_or_else(|| Error::InvalidWeights("max_outer must be at least 1".into()))?;
    let state_dist = weighted_mixture(stats, &weights)?.p_w;
    Ok(RobustModel {
        demo_ids: stats.iter().map(|s| s.demo_id.clone()).collect(),
        dual,
        weights,
        terms,
        objective,
        history,
        converged,
        inner_converged,
        oscillated,
        state_dist,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
