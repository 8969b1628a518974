//! Metrics, the count-based behavior-cloning baseline, and the
//! adversarial-count sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{build_feature_map, DemoSet, Demonstration, FeatureSpec, StateId, TaskSpec};
use crate::envs::{gen_demo, rollout, DemoKind, Env, GridWorld};
use crate::error::{Error, Result};
use crate::maxent::Policy;
use crate::robust::{fit_robust, RobustOptions};

/// Exact tabular maximum-likelihood policy: pooled `count(s,a)/count(s)`
/// over all demos, uniform on unvisited states.
pub fn bc_mle_fit(demos: &[Demonstration], task: &TaskSpec) -> Result<Policy> {
    if demos.is_empty() {
        return Err(Error::InvalidDemo("behavior cloning needs at least one demo".into()));
    }
    let (n_s, n_a) = (task.n_states, task.n_actions);
    let mut counts = vec![0u64; n_s * n_a];
    let mut totals = vec![0u64; n_s];
    for demo in demos {
        demo.validate(task)?;
        for step in &demo.steps {
            counts[step.s.0 * n_a + step.a.0] += 1;
            totals[step.s.0] += 1;
        }
    }
    let table = (0..n_s * n_a)
        .map(|i| match totals[i / n_a] {
            0 => 1.0 / n_a as f64,
            t => counts[i] as f64 / t as f64,
        })
        .collect();
    Policy::new(n_s, n_a, table)
}

/// Fraction of non-goal cells whose argmax action (lowest index on ties)
/// shortens the distance to the goal.
pub fn grid_accuracy(policy: &Policy, grid: &GridWorld) -> Result<f64> {
    if policy.n_states() != grid.n_states() || policy.n_actions() != 4 {
        return Err(Error::DimensionMismatch {
            context: "grid_accuracy",
            expected: grid.n_states() * 4,
            got: policy.n_states() * policy.n_actions(),
        });
    }
    let cells: Vec<StateId> = (0..grid.n_states())
        .map(StateId)
        .filter(|&s| s != grid.goal())
        .collect();
    let hits = cells
        .iter()
        .filter(|&&s| {
            grid.optimal_actions(s)
                .iter()
                .any(|a| a.0 == policy.argmax(s.0))
        })
        .count();
    Ok(hits as f64 / cells.len() as f64)
}

/// Mean and population standard deviation of returns over `n_episodes`
/// rollouts seeded `seed, seed + 1, ...`.
pub fn expected_return(policy: &Policy, env: &Env, n_episodes: usize, seed: u64) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::InvalidTask("n_episodes must be at least 1".into()));
    }
    let returns = (0..n_episodes as u64)
        .map(|i| Ok(rollout(policy, env, seed.wrapping_add(i), env.max_steps())?.ret))
        .collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "rment")]
    RmEnt,
    #[serde(rename = "bc")]
    Bc,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::RmEnt => "rment",
            Algorithm::Bc => "bc",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rment" => Ok(Algorithm::RmEnt),
            "bc" => Ok(Algorithm::Bc),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Result of evaluating one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metric: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_episodes: Option<usize>,
    pub n_states: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// The default metric: accuracy on the grid, mean return on mountain car.
pub fn default_metric(env: &Env) -> &'static str {
    match env {
        Env::GridWorld(_) => "accuracy",
        Env::MountainCar(_) => "return",
    }
}

/// Indicator features matching the task's own discretization.
pub fn default_features(env: &Env) -> FeatureSpec {
    match env {
        Env::GridWorld(_) => FeatureSpec::TabularIndicator,
        Env::MountainCar(m) => FeatureSpec::TiledIndicator {
            tiles: m.bins.to_vec(),
        },
    }
}

pub fn evaluate_policy(
    policy: &Policy,
    env: &Env,
    metric: &str,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let task = env.task_spec();
    let (value, std, n_episodes) = match (metric, env) {
        ("accuracy", Env::GridWorld(g)) => (grid_accuracy(policy, g)?, None, None),
        ("accuracy", _) => {
            return Err(Error::InvalidTask(format!(
                "accuracy is only defined for gridworld, not {}",
                env.name()
            )))
        }
        ("return", _) => {
            let (mean, std) = expected_return(policy, env, n_episodes, seed)?;
            (mean, Some(std), Some(n_episodes))
        }
        (other, _) => return Err(Error::InvalidTask(format!("unknown metric {other:?}"))),
    };
    Ok(EvalReport {
        task: task.name,
        metric: metric.to_string(),
        value,
        std,
        n_episodes,
        n_states: task.n_states,
        seed,
        weights: None,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub env: Env,
    pub n_correct: usize,
    pub n_adversarial: usize,
    pub algs: Vec<Algorithm>,
    pub m: f64,
    pub seed: u64,
    pub features: FeatureSpec,
    pub robust: RobustOptions,
    /// Rollouts per row for the return metric.
    pub episodes: usize,
}

impl SweepConfig {
    pub fn new(env: Env, n_correct: usize, n_adversarial: usize, algs: Vec<Algorithm>, m: f64, seed: u64) -> Self {
        SweepConfig {
            features: default_features(&env),
            env,
            n_correct,
            n_adversarial,
            algs,
            m,
            seed,
            robust: RobustOptions::default(),
            episodes: 100,
        }
    }
}

/// One (algorithm, adversarial count) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alg: Algorithm,
    pub task: String,
    pub n_correct: usize,
    pub n_adversarial: usize,
    #[serde(rename = "M")]
    pub m: f64,
    pub metric: String,
    /// `Err` carries the message of a failed fit or evaluation.
    pub value: std::result::Result<f64, String>,
    pub seed: u64,
    pub demo_ids: Vec<String>,
    pub weights: Option<Vec<f64>>,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 8] =
        ["alg", "task", "n_correct", "n_adversarial", "M", "metric", "value", "seed"];

    pub fn csv_fields(&self) -> [String; 8] {
        [
            self.alg.to_string(),
            self.task.clone(),
            self.n_correct.to_string(),
            self.n_adversarial.to_string(),
            self.m.to_string(),
            self.metric.clone(),
            match &self.value {
                Ok(v) => v.to_string(),
                Err(_) => "error".to_string(),
            },
            self.seed.to_string(),
        ]
    }
}

/// Demo set for one sweep cell: correct demos seeded `seed..seed + n_correct`
/// followed by adversarial demos seeded `seed..seed + n_adversarial`.
pub fn sweep_demos(env: &Env, n_correct: usize, n_adversarial: usize, seed: u64) -> Result<Vec<Demonstration>> {
    let correct = (0..n_correct as u64).map(|j| gen_demo(env, DemoKind::Correct, seed + j));
    let adversarial = (0..n_adversarial as u64).map(|j| gen_demo(env, DemoKind::Adversarial, seed + j));
    correct.chain(adversarial).collect()
}

fn run_cell(
    cfg: &SweepConfig,
    alg: Algorithm,
    demos: &[Demonstration],
    eval_seed: u64,
) -> Result<(f64, Option<Vec<f64>>)> {
    let task = cfg.env.task_spec();
    let metric = default_metric(&cfg.env);
    let (policy, weights) = match alg {
        Algorithm::Bc => (bc_mle_fit(demos, &task)?, None),
        Algorithm::RmEnt => {
            let set = DemoSet::new(demos.to_vec(), task.clone())?;
            let fm = build_feature_map(&cfg.features, &task)?;
            let model = fit_robust(&set, &fm, cfg.m, &cfg.robust)?;
            (model.policy(&fm)?, Some(model.weights.weights().to_vec()))
        }
    };
    let report = evaluate_policy(&policy, &cfg.env, metric, cfg.episodes, eval_seed)?;
    Ok((report.value, weights))
}

/// Fits every algorithm for adversarial counts `0..=n_adversarial`. Rows are
/// ordered by count, then by algorithm; row `i` evaluates with seed
/// `seed + i`. A failing cell is recorded in its row and the sweep goes on.
pub fn robustness_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.n_correct == 0 {
        return Err(Error::InvalidDemo("a sweep needs at least one correct demo".into()));
    }
    let task = cfg.env.task_spec();
    let metric = default_metric(&cfg.env);
    let mut rows = Vec::new();
    for k in 0..=cfg.n_adversarial {
        let demos = sweep_demos(&cfg.env, cfg.n_correct, k, cfg.seed);
        for &alg in &cfg.algs {
            let eval_seed = cfg.seed + rows.len() as u64;
            let (value, weights, demo_ids) = match &demos {
                Ok(demos) => {
                    let ids = demos.iter().map(|d| d.demo_id.clone()).collect();
                    match run_cell(cfg, alg, demos, eval_seed) {
                        Ok((v, w)) => (Ok(v), w, ids),
                        Err(e) => (Err(e.to_string()), None, ids),
                    }
                }
                Err(e) => (Err(e.to_string()), None, Vec::new()),
            };
            rows.push(SweepRow {
                alg,
                task: task.name.clone(),
                n_correct: cfg.n_correct,
                n_adversarial: k,
                m: cfg.m,
                metric: metric.to_string(),
                value,
                seed: eval_seed,
                demo_ids,
                weights,
            });
        }
    }
    Ok(rows)
}
