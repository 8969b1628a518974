//! Maximum-entropy policy fitting through the concave dual
//!
//! ```text
//! Λ(λ) = −Σ_s p̃_w(s)·log z_λ(s) + Σ_i λ_i·Σ_{s,a} π̃_w(s,a)·f_i(s,a)
//! z_λ(s) = Σ_a exp(λ·f(s,a))
//! π_λ(a|s) = exp(λ·f(s,a) − log z_λ(s))
//! ```
//!
//! The gradient of Λ is the feature-expectation gap between the weighted
//! demonstrations and the induced policy, so a stationary point matches
//! feature expectations exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::FeatureMap;
use crate::empirical::WeightedStats;
use crate::error::{Error, Result};

/// Tolerance used when comparing action probabilities for argmax ties.
pub const ARGMAX_TIE_EPS: f64 = 1e-9;

/// Row-stochastic |S|×|A| table π(a|s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    table: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                context: "policy table",
                expected: n_states * n_actions,
                got: table.len(),
            });
        }
        for s in 0..n_states {
            let row = &table[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::NonFinite(format!("policy row {s} has invalid entries")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidTask(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Policy {
            n_states,
            n_actions,
            table,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            table: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Puts all mass on `actions[s]` in every state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut table = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::OutOfRange {
                    what: "action",
                    index: a,
                    bound: n_actions,
                });
            }
            table[s * n_actions + a] = 1.0;
        }
        Policy::new(actions.len(), n_actions, table)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.table[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Most probable action; near-ties (within [`ARGMAX_TIE_EPS`]) go to the
    /// lowest action index.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter()
            .position(|&p| p >= max - ARGMAX_TIE_EPS)
            .unwrap_or(0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let row = self.row(s);
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // Rounding left the cumulative sum just under 1.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.n_actions - 1)
    }

    /// Replaces the rows of the given states with the uniform distribution.
    pub(crate) fn set_uniform_rows(&mut self, states: impl Iterator<Item = usize>) {
        let u = 1.0 / self.n_actions as f64;
        for s in states {
            self.table[s * self.n_actions..(s + 1) * self.n_actions].fill(u);
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn state_log_z(lambda: &[f64], fm: &FeatureMap, s: usize) -> f64 {
    log_sum_exp((0..fm.n_actions()).map(|a| fm.score(lambda, s, a)))
}

/// `log z_λ(s)`, computed with log-sum-exp.
pub fn log_partition(lambda: &[f64], fm: &FeatureMap, s: usize) -> Result<f64> {
    fm.check_lambda(lambda)?;
    if s >= fm.n_states() {
        return Err(Error::OutOfRange {
            what: "state",
            index: s,
            bound: fm.n_states(),
        });
    }
    Ok(state_log_z(lambda, fm, s))
}

pub fn log_partitions(lambda: &[f64], fm: &FeatureMap) -> Result<Vec<f64>> {
    fm.check_lambda(lambda)?;
    Ok((0..fm.n_states()).map(|s| state_log_z(lambda, fm, s)).collect())
}

/// Closed-form max-ent policy induced by `lambda`.
pub fn policy_from_lambda(lambda: &[f64], fm: &FeatureMap) -> Result<Policy> {
    fm.check_lambda(lambda)?;
    let (n_s, n_a) = (fm.n_states(), fm.n_actions());
    let mut table = Vec::with_capacity(n_s * n_a);
    for s in 0..n_s {
        let lz = state_log_z(lambda, fm, s);
        table.extend((0..n_a).map(|a| (fm.score(lambda, s, a) - lz).exp()));
    }
    Ok(Policy {
        n_states: n_s,
        n_actions: n_a,
        table,
    })
}

/// Policy for deployment: states without weighted empirical mass get the
/// uniform row, whatever λ says about them through shared features.
pub fn extract_policy(lambda: &[f64], fm: &FeatureMap, p_w: &[f64]) -> Result<Policy> {
    if p_w.len() != fm.n_states() {
        return Err(Error::DimensionMismatch {
            context: "extract_policy",
            expected: fm.n_states(),
            got: p_w.len(),
        });
    }
    let mut policy = policy_from_lambda(lambda, fm)?;
    policy.set_uniform_rows((0..p_w.len()).filter(|&s| p_w[s] == 0.0));
    Ok(policy)
}

fn check_stats(ws: &WeightedStats, fm: &FeatureMap) -> Result<()> {
    if ws.n_states() != fm.n_states() || ws.n_actions() != fm.n_actions() {
        return Err(Error::DimensionMismatch {
            context: "weighted stats vs feature map",
            expected: fm.n_states() * fm.n_actions(),
            got: ws.n_states() * ws.n_actions(),
        });
    }
    Ok(())
}

/// Value, gradient, and per-state log partitions in one pass. `target` is
/// the empirical feature expectation of `ws`.
fn evaluate(
    lambda: &[f64],
    ws: &WeightedStats,
    fm: &FeatureMap,
    target: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let n_a = fm.n_actions();
    let mut value: f64 = lambda.iter().zip(target).map(|(l, t)| l * t).sum();
    let mut grad = target.to_vec();
    let mut log_z = Vec::with_capacity(fm.n_states());
    for s in 0..fm.n_states() {
        let lz = state_log_z(lambda, fm, s);
        log_z.push(lz);
        let p = ws.p_w[s];
        if p == 0.0 {
            continue;
        }
        value -= p * lz;
        for a in 0..n_a {
            grad[fm.hot_index(s, a)] -= p * (fm.score(lambda, s, a) - lz).exp();
        }
    }
    (value, grad, log_z)
}

pub fn dual_value(lambda: &[f64], ws: &WeightedStats, fm: &FeatureMap) -> Result<f64> {
    fm.check_lambda(lambda)?;
    check_stats(ws, fm)?;
    let target = ws.feature_target(fm);
    Ok(evaluate(lambda, ws, fm, &target).0)
}

/// ∂Λ/∂λ: empirical minus model feature expectation.
pub fn dual_gradient(lambda: &[f64], ws: &WeightedStats, fm: &FeatureMap) -> Result<Vec<f64>> {
    fm.check_lambda(lambda)?;
    check_stats(ws, fm)?;
    let target = ws.feature_target(fm);
    Ok(evaluate(lambda, ws, fm, &target).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once ‖∇Λ‖∞ falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Box bound on every multiplier.
    pub lambda_cap: f64,
    /// L-BFGS history length; 0 gives plain gradient ascent.
    pub memory: usize,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 5000,
            lambda_cap: 500.0,
            memory: 10,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    pub log_z: Vec<f64>,
    pub dual_value: f64,
    /// ‖∇Λ‖∞ at the returned λ.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of multipliers sitting on the ±cap boundary.
    pub cap_hits: usize,
}

impl DualSolution {
    pub fn policy(&self, fm: &FeatureMap) -> Result<Policy> {
        policy_from_lambda(&self.lambda, fm)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes Λ starting from λ = 0.
pub fn fit_lambda(ws: &WeightedStats, fm: &FeatureMap, opts: &SolverOptions) -> Result<DualSolution> {
    fit_lambda_from(ws, fm, opts, &vec![0.0; fm.n_features()])
}

/// Maximizes Λ with L-BFGS ascent and an Armijo backtracking line search,
/// projecting onto the `±lambda_cap` box. Accepted iterates never decrease
/// Λ. Non-convergence within `max_iter` is reported through
/// [`DualSolution::converged`]; a NaN is a hard error.
pub fn fit_lambda_from(
    ws: &WeightedStats,
    fm: &FeatureMap,
    opts: &SolverOptions,
    init: &[f64],
) -> Result<DualSolution> {
    fm.check_lambda(init)?;
    check_stats(ws, fm)?;
    let cap = opts.lambda_cap;
    let target = ws.feature_target(fm);

    let mut lambda: Vec<f64> = init.iter().map(|v| v.clamp(-cap, cap)).collect();
    let (mut value, mut grad, mut log_z) = evaluate(&lambda, ws, fm, &target);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("dual objective or gradient at the initial point".into()));
    }

    // Curvature pairs for the minimization of −Λ.
    let mut hist_s: Vec<Vec<f64>> = Vec::new();
    let mut hist_y: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) <= opts.tol;

    while !converged && iterations < opts.max_iter {
        // Descent gradient of −Λ.
        let g: Vec<f64> = grad.iter().map(|v| -v).collect();
        let mut dir = lbfgs_direction(&g, &hist_s, &hist_y);
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            hist_s.clear();
            hist_y.clear();
        }

        let mut accepted = line_search(&lambda, value, &g, &dir, ws, fm, &target, opts)?;
        if accepted.is_none() && !hist_s.is_empty() {
            hist_s.clear();
            hist_y.clear();
            let steepest: Vec<f64> = g.iter().map(|v| -v).collect();
            accepted = line_search(&lambda, value, &g, &steepest, ws, fm, &target, opts)?;
        }

        let Some((cand, v, gr, lz)) = accepted else {
            break;
        };
        let s: Vec<f64> = cand.iter().zip(&lambda).map(|(c, l)| c - l).collect();
        let y: Vec<f64> = gr.iter().zip(&grad).map(|(new, old)| -(new - old)).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && opts.memory > 0 {
            if hist_s.len() == opts.memory {
                hist_s.remove(0);
                hist_y.remove(0);
            }
            hist_s.push(s);
            hist_y.push(y);
        }
        lambda = cand;
        value = v;
        grad = gr;
        log_z = lz;
        iterations += 1;
        converged = inf_norm(&grad) <= opts.tol;
    }

    let cap_hits = lambda.iter().filter(|l| l.abs() >= cap).count();
    Ok(DualSolution {
        grad_norm: inf_norm(&grad),
        lambda,
        log_z,
        dual_value: value,
        iterations,
        converged,
        cap_hits,
    })
}

type Evaluated = (Vec<f64>, f64, Vec<f64>, Vec<f64>);

/// Backtracking along `dir` with projection onto the cap box. Sufficient
/// increase is measured along the displacement actually taken. Returns
/// `None` when no step in the schedule increases Λ enough.
#[allow(clippy::too_many_arguments)]
fn line_search(
    lambda: &[f64],
    value: f64,
    g: &[f64],
    dir: &[f64],
    ws: &WeightedStats,
    fm: &FeatureMap,
    target: &[f64],
    opts: &SolverOptions,
) -> Result<Option<Evaluated>> {
    let cap = opts.lambda_cap;
    let mut t = 1.0;
    for _ in 0..opts.max_backtracks {
        let cand: Vec<f64> = lambda
            .iter()
            .zip(dir)
            .map(|(l, d)| (l + t * d).clamp(-cap, cap))
            .collect();
        let predicted: f64 = cand
            .iter()
            .zip(lambda)
            .zip(g)
            .map(|((c, l), gi)| (c - l) * gi)
            .sum();
        if predicted < 0.0 {
            let (v, gr, lz) = evaluate(&cand, ws, fm, target);
            if !v.is_finite() || gr.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("dual objective or gradient".into()));
            }
            if v >= value - opts.armijo * predicted {
                return Ok(Some((cand, v, gr, lz)));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Two-loop recursion; returns `−H·g` for the current inverse-Hessian
/// approximation.
fn lbfgs_direction(g: &[f64], hist_s: &[Vec<f64>], hist_y: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = hist_s.len();
    let mut alpha = vec![0.0; k];
    let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&hist_y[i], &hist_s[i])).collect();
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&hist_s[i], &q);
        for (qj, yj) in q.iter_mut().zip(&hist_y[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    let gamma = match k {
        0 => 1.0,
        _ => dot(&hist_s[k - 1], &hist_y[k - 1]) / dot(&hist_y[k - 1], &hist_y[k - 1]),
    };
    q.iter_mut().for_each(|v| *v *= gamma);
    for i in 0..k {
        let beta = rho[i] * dot(&hist_y[i], &q);
        for (qj, sj) in q.iter_mut().zip(&hist_s[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
