//! Shared domain types: state/action ids, tasks and their discretizers,
//! indicator feature maps, and the demonstration container with its JSON
//! Lines wire format.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell of the discretized state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// Maps continuous observations onto [`StateId`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discretizer {
    /// Tabular task: the observation is the state index itself.
    Identity { n: usize },
    /// Uniform bins over each dimension, combined row-major (last dimension
    /// varies fastest).
    Grid {
        bins: Vec<usize>,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl Discretizer {
    pub fn n_states(&self) -> usize {
        match self {
            Discretizer::Identity { n } => *n,
            Discretizer::Grid { bins, .. } => bins.iter().product(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Discretizer::Identity { .. } => 1,
            Discretizer::Grid { bins, .. } => bins.len(),
        }
    }

    /// Bin counts per dimension; an identity discretizer is a single
    /// dimension with one bin per state.
    pub fn bins(&self) -> Vec<usize> {
        match self {
            Discretizer::Identity { n } => vec![*n],
            Discretizer::Grid { bins, .. } => bins.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Discretizer::Identity { n } => {
                if *n == 0 {
                    return Err(Error::InvalidTask("identity discretizer with zero states".into()));
                }
            }
            Discretizer::Grid { bins, low, high } => {
                if bins.is_empty() || bins.len() != low.len() || bins.len() != high.len() {
                    return Err(Error::InvalidTask(
                        "grid discretizer needs matching non-empty bins/low/high".into(),
                    ));
                }
                for i in 0..bins.len() {
                    if bins[i] == 0 {
                        return Err(Error::InvalidTask(format!("dimension {i} has zero bins")));
                    }
                    if !(low[i].is_finite() && high[i].is_finite() && low[i] < high[i]) {
                        return Err(Error::InvalidTask(format!(
                            "dimension {i} has invalid range [{}, {}]",
                            low[i], high[i]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Out-of-range coordinates are clamped to the nearest edge bin.
    pub fn discretize(&self, x: &[f64]) -> Result<StateId> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                context: "discretize",
                expected: self.dims(),
                got: x.len(),
            });
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation coordinate {v}")));
        }
        match self {
            Discretizer::Identity { n } => {
                let idx = x[0].round().clamp(0.0, (*n - 1) as f64);
                Ok(StateId(idx as usize))
            }
            Discretizer::Grid { bins, low, high } => {
                let mut index = 0usize;
                for i in 0..bins.len() {
                    let t = (x[i] - low[i]) / (high[i] - low[i]);
                    let b = (t * bins[i] as f64).floor();
                    let b = b.clamp(0.0, (bins[i] - 1) as f64) as usize;
                    index = index * bins[i] + b;
                }
                Ok(StateId(index))
            }
        }
    }

    /// Per-dimension bin coordinates of a state (inverse of the row-major
    /// combination).
    pub fn unravel(&self, s: StateId) -> Vec<usize> {
        let bins = self.bins();
        let mut coords = vec![0; bins.len()];
        let mut rem = s.0;
        for i in (0..bins.len()).rev() {
            coords[i] = rem % bins[i];
            rem /= bins[i];
        }
        coords
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub discretizer: Discretizer,
}

impl TaskSpec {
    pub fn new(
        name: impl Into<String>,
        n_actions: usize,
        discretizer: Discretizer,
    ) -> Result<Self> {
        let task = TaskSpec {
            name: name.into(),
            n_states: discretizer.n_states(),
            n_actions,
            discretizer,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn tabular(name: impl Into<String>, n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(name, n_actions, Discretizer::Identity { n: n_states })
    }

    /// Checks the invariants; needed after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::InvalidTask("n_states must be at least 1".into()));
        }
        if self.n_actions < 2 {
            return Err(Error::InvalidTask("n_actions must be at least 2".into()));
        }
        self.discretizer.validate()?;
        if self.discretizer.n_states() != self.n_states {
            return Err(Error::InvalidTask(format!(
                "discretizer yields {} states but task declares {}",
                self.discretizer.n_states(),
                self.n_states
            )));
        }
        Ok(())
    }

    pub fn discretize(&self, x: &[f64]) -> Result<StateId> {
        self.discretizer.discretize(x)
    }

    pub fn check_state(&self, s: StateId) -> Result<()> {
        if s.0 >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s.0,
                bound: self.n_states,
            });
        }
        Ok(())
    }

    pub fn check_action(&self, a: ActionId) -> Result<()> {
        if a.0 >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a.0,
                bound: self.n_actions,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// One indicator per (state, action) pair.
    TabularIndicator,
    /// Indicators over a coarser uniform tiling of the discretizer's bins,
    /// crossed with the action.
    TiledIndicator { tiles: Vec<usize> },
}

/// Indicator feature map. Every (s, a) pair lights exactly one feature, so
/// the map is stored as the hot index per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: FeatureSpec,
    n_states: usize,
    n_actions: usize,
    n_features: usize,
    hot: Vec<usize>,
}

pub fn build_feature_map(spec: &FeatureSpec, task: &TaskSpec) -> Result<FeatureMap> {
    task.validate()?;
    let (n_s, n_a) = (task.n_states, task.n_actions);
    let (n_features, hot) = match spec {
        FeatureSpec::TabularIndicator => (n_s * n_a, (0..n_s * n_a).collect()),
        FeatureSpec::TiledIndicator { tiles } => {
            let bins = task.discretizer.bins();
            if tiles.len() != bins.len() {
                return Err(Error::UnsupportedFeatures(format!(
                    "tiling has {} dimensions but the task's state space has {}",
                    tiles.len(),
                    bins.len()
                )));
            }
            for (i, (&t, &b)) in tiles.iter().zip(&bins).enumerate() {
                if t == 0 || t > b {
                    return Err(Error::UnsupportedFeatures(format!(
                        "dimension {i}: {t} tiles over {b} bins"
                    )));
                }
            }
            let n_tiles: usize = tiles.iter().product();
            let mut hot = Vec::with_capacity(n_s * n_a);
            for s in 0..n_s {
                let coords = task.discretizer.unravel(StateId(s));
                let tile = coords
                    .iter()
                    .zip(tiles.iter().zip(&bins))
                    .fold(0usize, |acc, (&c, (&t, &b))| acc * t + c * t / b);
                hot.extend((0..n_a).map(|a| tile * n_a + a));
            }
            (n_tiles * n_a, hot)
        }
    };
    Ok(FeatureMap {
        spec: spec.clone(),
        n_states: n_s,
        n_actions: n_a,
        n_features,
        hot,
    })
}

impl FeatureMap {
    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Index of the single feature that is 1 at `(s, a)`. Callers must pass
    /// in-range ids.
    #[inline]
    pub fn hot_index(&self, s: usize, a: usize) -> usize {
        self.hot[s * self.n_actions + a]
    }

    pub fn feature_vector(&self, s: StateId, a: ActionId) -> Result<Vec<f64>> {
        if s.0 >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s.0,
                bound: self.n_states,
            });
        }
        if a.0 >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a.0,
                bound: self.n_actions,
            });
        }
        let mut f = vec![0.0; self.n_features];
        f[self.hot_index(s.0, a.0)] = 1.0;
        Ok(f)
    }

    /// `λ·f(s, a)` without materializing the feature vector.
    #[inline]
    pub fn score(&self, lambda: &[f64], s: usize, a: usize) -> f64 {
        lambda[self.hot_index(s, a)]
    }

    pub(crate) fn check_lambda(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                context: "lambda",
                expected: self.n_features,
                got: lambda.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub s: StateId,
    pub a: ActionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub demo_id: String,
    pub steps: Vec<Step>,
    /// Continuous observations before discretization, one per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<Vec<f64>>>,
}

impl Demonstration {
    pub fn new(demo_id: impl Into<String>, steps: Vec<Step>) -> Self {
        Demonstration {
            demo_id: demo_id.into(),
            steps,
            raw: None,
        }
    }

    pub fn from_pairs(demo_id: impl Into<String>, pairs: &[(usize, usize)]) -> Self {
        let steps = pairs
            .iter()
            .map(|&(s, a)| Step {
                s: StateId(s),
                a: ActionId(a),
            })
            .collect();
        Self::new(demo_id, steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self, task: &TaskSpec) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidDemo(format!("demo {:?} has no steps", self.demo_id)));
        }
        for step in &self.steps {
            task.check_state(step.s)?;
            task.check_action(step.a)?;
        }
        if let Some(raw) = &self.raw {
            if raw.len() != self.steps.len() {
                return Err(Error::InvalidDemo(format!(
                    "demo {:?} has {} raw states for {} steps",
                    self.demo_id,
                    raw.len(),
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }

    /// Re-bins the raw observations under a different task discretizer.
    pub fn rediscretize(&self, task: &TaskSpec) -> Result<Demonstration> {
        let raw = self.raw.as_ref().ok_or_else(|| {
            Error::InvalidDemo(format!("demo {:?} carries no raw states", self.demo_id))
        })?;
        let steps = raw
            .iter()
            .zip(&self.steps)
            .map(|(x, step)| {
                Ok(Step {
                    s: task.discretize(x)?,
                    a: step.a,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Demonstration {
            demo_id: self.demo_id.clone(),
            steps,
            raw: self.raw.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DemoSet {
    demos: Vec<Demonstration>,
    task: TaskSpec,
}

impl DemoSet {
    pub fn new(demos: Vec<Demonstration>, task: TaskSpec) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::InvalidDemo("demo set is empty".into()));
        }
        let mut seen = HashSet::new();
        for d in &demos {
            if !seen.insert(d.demo_id.as_str()) {
                return Err(Error::InvalidDemo(format!("duplicate demo_id {:?}", d.demo_id)));
            }
            d.validate(&task)?;
        }
        Ok(DemoSet { demos, task })
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

/// Reads one demonstration per non-blank line. Parse errors carry the
/// 1-based line number.
pub fn read_demos_jsonl<R: BufRead>(reader: R) -> Result<Vec<Demonstration>> {
    let mut demos = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let demo: Demonstration = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        demos.push(demo);
    }
    Ok(demos)
}

pub fn write_demos_jsonl<W: Write>(mut writer: W, demos: &[Demonstration]) -> Result<()> {
    for d in demos {
        let line = serde_json::to_string(d).map_err(std::io::Error::from)?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
