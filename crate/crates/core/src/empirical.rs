//! Per-demonstration empirical distributions and their trust-weighted
//! mixtures.
//!
//! Counts are accumulated as integers and divided once, so statistics are
//! bit-identical across platforms and independent of step order.

use serde::{Deserialize, Serialize};

use crate::domain::{Demonstration, FeatureMap, TaskSpec};
use crate::error::{Error, Result};
use crate::maxent::Policy;

/// Empirical statistics of a single demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoStats {
    pub demo_id: String,
    pub n_steps: usize,
    n_actions: usize,
    /// p̃(s|d)
    pub state_dist: Vec<f64>,
    /// p̃(s,a|d), row-major |S|×|A|.
    pub joint: Vec<f64>,
    cond: Vec<f64>,
    visited: Vec<bool>,
    /// Σ_{s,a} p̃(s,a|d)·f(s,a)
    pub feat_expect: Vec<f64>,
}

impl DemoStats {
    /// π̃(·|s,d), or `None` when the demonstration never visits `s`.
    pub fn cond_policy(&self, s: usize) -> Option<&[f64]> {
        self.visited[s].then(|| &self.cond[s * self.n_actions..(s + 1) * self.n_actions])
    }

    pub fn visited(&self, s: usize) -> bool {
        self.visited[s]
    }

    pub fn n_states(&self) -> usize {
        self.state_dist.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

pub fn demo_stats(demo: &Demonstration, task: &TaskSpec, fm: &FeatureMap) -> Result<DemoStats> {
    demo.validate(task)?;
    if fm.n_states() != task.n_states || fm.n_actions() != task.n_actions {
        return Err(Error::DimensionMismatch {
            context: "feature map vs task",
            expected: task.n_states * task.n_actions,
            got: fm.n_states() * fm.n_actions(),
        });
    }
    let (n_s, n_a) = (task.n_states, task.n_actions);
    let mut state_counts = vec![0u64; n_s];
    let mut pair_counts = vec![0u64; n_s * n_a];
    for step in &demo.steps {
        state_counts[step.s.0] += 1;
        pair_counts[step.s.0 * n_a + step.a.0] += 1;
    }
    let q = demo.steps.len() as f64;

    let state_dist: Vec<f64> = state_counts.iter().map(|&c| c as f64 / q).collect();
    let joint: Vec<f64> = pair_counts.iter().map(|&c| c as f64 / q).collect();
    let visited: Vec<bool> = state_counts.iter().map(|&c| c > 0).collect();
    let mut cond = vec![0.0; n_s * n_a];
    for s in 0..n_s {
        if state_counts[s] > 0 {
            for a in 0..n_a {
                cond[s * n_a + a] = pair_counts[s * n_a + a] as f64 / state_counts[s] as f64;
            }
        }
    }
    let feat_expect = joint_feature_expectation(&joint, fm);

    Ok(DemoStats {
        demo_id: demo.demo_id.clone(),
        n_steps: demo.steps.len(),
        n_actions: n_a,
        state_dist,
        joint,
        cond,
        visited,
        feat_expect,
    })
}

/// Σ_{s,a} joint(s,a)·f(s,a) for a row-major joint table.
pub fn joint_feature_expectation(joint: &[f64], fm: &FeatureMap) -> Vec<f64> {
    let n_a = fm.n_actions();
    let mut fe = vec![0.0; fm.n_features()];
    for (i, &p) in joint.iter().enumerate() {
        if p != 0.0 {
            fe[fm.hot_index(i / n_a, i % n_a)] += p;
        }
    }
    fe
}

/// Per-demonstration trust weights `w ∈ [0,1]^D` with `Σ w = M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
    m: f64,
}

pub(crate) const WEIGHT_EPS: f64 = 1e-9;

impl WeightVector {
    pub fn new(w: Vec<f64>, m: f64) -> Result<Self> {
        check_budget(m, w.len())?;
        if let Some((d, v)) = w
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-WEIGHT_EPS..=1.0 + WEIGHT_EPS).contains(&v))
        {
            return Err(Error::InvalidWeights(format!("w[{d}] = {v} outside [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - m).abs() > WEIGHT_EPS * m.max(1.0) {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, expected {m}")));
        }
        Ok(WeightVector { w, m })
    }

    /// `M/D` on every demonstration.
    pub fn uniform(d: usize, m: f64) -> Result<Self> {
        check_budget(m, d)?;
        Ok(WeightVector {
            w: vec![m / d as f64; d],
            m,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn budget(&self) -> f64 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

pub(crate) fn check_budget(m: f64, d: usize) -> Result<()> {
    if !(m.is_finite() && m > 0.0 && m <= d as f64) {
        return Err(Error::BudgetOutOfRange { m, d });
    }
    Ok(())
}

/// The w-weighted mixture of per-demo statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedStats {
    /// p̃_w(s)
    pub p_w: Vec<f64>,
    /// π̃_w(s,a), row-major |S|×|A|.
    pub joint_w: Vec<f64>,
    pub m: f64,
    pub w: WeightVector,
    n_actions: usize,
}

impl WeightedStats {
    pub fn n_states(&self) -> usize {
        self.p_w.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Empirical side of the matching constraint.
    pub fn feature_target(&self, fm: &FeatureMap) -> Vec<f64> {
        joint_feature_expectation(&self.joint_w, fm)
    }

    /// Builds the statistics of an arbitrary state distribution paired with
    /// a policy, so the empirical side is `p(s)·π(a|s)`. Weight bookkeeping
    /// is a single unit-weight pseudo-demo.
    pub fn from_policy(p: &[f64], policy: &Policy) -> Result<Self> {
        if p.len() != policy.n_states() {
            return Err(Error::DimensionMismatch {
                context: "state distribution vs policy",
                expected: policy.n_states(),
                got: p.len(),
            });
        }
        let n_a = policy.n_actions();
        let mut joint_w = vec![0.0; p.len() * n_a];
        for (s, &ps) in p.iter().enumerate() {
            for a in 0..n_a {
                joint_w[s * n_a + a] = ps * policy.prob(s, a);
            }
        }
        Ok(WeightedStats {
            p_w: p.to_vec(),
            joint_w,
            m: 1.0,
            w: WeightVector::new(vec![1.0], 1.0)?,
            n_actions: n_a,
        })
    }
}

pub fn weighted_mixture(stats: &[DemoStats], w: &WeightVector) -> Result<WeightedStats> {
    if stats.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "weighted_mixture",
            expected: stats.len(),
            got: w.len(),
        });
    }
    let first = stats
        .first()
        .ok_or_else(|| Error::InvalidDemo("no demonstration statistics".into()))?;
    let (n_s, n_a) = (first.n_states(), first.n_actions());
    if let Some(bad) = stats.iter().find(|d| d.n_states() != n_s || d.n_actions() != n_a) {
        return Err(Error::DimensionMismatch {
            context: "weighted_mixture stats shape",
            expected: n_s * n_a,
            got: bad.n_states() * bad.n_actions(),
        });
    }
    let m = w.budget();
    let mut p_w = vec![0.0; n_s];
    let mut joint_w = vec![0.0; n_s * n_a];
    for (d, &wd) in stats.iter().zip(w.weights()) {
        if wd == 0.0 {
            continue;
        }
        for (acc, &p) in p_w.iter_mut().zip(&d.state_dist) {
            *acc += wd * p;
        }
        for (acc, &p) in joint_w.iter_mut().zip(&d.joint) {
            *acc += wd * p;
        }
    }
    p_w.iter_mut().for_each(|v| *v /= m);
    joint_w.iter_mut().for_each(|v| *v /= m);
    Ok(WeightedStats {
        p_w,
        joint_w,
        m,
        w: w.clone(),
        n_actions: n_a,
    })
}

/// Σ_s p_w(s) Σ_a π(a|s) f(s,a)
pub fn model_feature_expectation(policy: &Policy, p_w: &[f64], fm: &FeatureMap) -> Result<Vec<f64>> {
    if p_w.len() != policy.n_states() || fm.n_states() != policy.n_states() {
        return Err(Error::DimensionMismatch {
            context: "model_feature_expectation",
            expected: policy.n_states(),
            got: p_w.len(),
        });
    }
    if fm.n_actions() != policy.n_actions() {
        return Err(Error::DimensionMismatch {
            context: "model_feature_expectation actions",
            expected: policy.n_actions(),
            got: fm.n_actions(),
        });
    }
    let mut fe = vec![0.0; fm.n_features()];
    for (s, &ps) in p_w.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        for a in 0..policy.n_actions() {
            fe[fm.hot_index(s, a)] += ps * policy.prob(s, a);
        }
    }
    Ok(fe)
}
