use serde::{Deserialize, Serialize};

use rment::maxent::extract_policy;
use rment::robust::OuterStep;
use rment::{build_feature_map, FeatureMap, FeatureSpec, Policy, RobustModel, RobustOptions, TaskSpec};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub options: RobustOptions,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub grad_norm: f64,
    pub dual_value: f64,
    pub cap_hits: usize,
    pub converged: bool,
    pub inner_converged: bool,
    pub oscillated: bool,
}

/// Everything needed to rebuild and audit a fitted policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub task: TaskSpec,
    pub feature_spec: FeatureSpec,
    pub lambda: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    pub demo_ids: Vec<String>,
    pub c: Vec<f64>,
    pub objective: f64,
    pub history: Vec<OuterStep>,
    pub solver: SolverInfo,
    /// Weighted state distribution; states with zero mass get uniform rows.
    pub state_dist: Vec<f64>,
}

impl ModelFile {
    pub fn from_fit(task: &TaskSpec, fm: &FeatureMap, model: &RobustModel, opts: &RobustOptions) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            task: task.clone(),
            feature_spec: fm.spec().clone(),
            lambda: model.dual.lambda.clone(),
            weights: model.weights.weights().to_vec(),
            m: model.weights.budget(),
            demo_ids: model.demo_ids.clone(),
            c: model.terms.c.clone(),
            objective: model.objective,
            history: model.history.clone(),
            solver: SolverInfo {
                options: opts.clone(),
                outer_iterations: model.history.len(),
                inner_iterations: model.history.iter().map(|h| h.inner_iterations).sum(),
                grad_norm: model.dual.grad_norm,
                dual_value: model.dual.dual_value,
                cap_hits: model.dual.cap_hits,
                converged: model.converged,
                inner_converged: model.inner_converged,
                oscillated: model.oscillated,
            },
            state_dist: model.state_dist.clone(),
        }
    }

    pub fn fully_converged(&self) -> bool {
        self.solver.converged && self.solver.inner_converged
    }

    pub fn policy(&self) -> rment::Result<Policy> {
        self.task.validate()?;
        let fm = build_feature_map(&self.feature_spec, &self.task)?;
        extract_policy(&self.lambda, &fm, &self.state_dist)
    }
}
