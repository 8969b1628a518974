//! Robust maximum-entropy behavior cloning.
//!
//! Policies are fit by matching feature expectations under maximum
//! conditional entropy, while every demonstration carries a trust weight in
//! `[0, 1]`. The weights are optimized jointly with the policy under a fixed
//! trust budget `M = Σ w`, which drives adversarial or random demonstrations
//! to weight zero.
//!
//! Module map:
//! * [`domain`]: tasks, discretizers, indicator features, demonstrations.
//! * [`empirical`]: per-demo statistics and their weighted mixtures.
//! * [`maxent`]: the concave dual, its gradient, and the λ solver.
//! * [`robust`]: per-demo dual terms, the weight step, and the joint fit.
//! * [`envs`]: grid world, mountain car, and demo generators.
//! * [`eval`]: metrics, the behavior-cloning baseline, and sweeps.

pub mod domain;
pub mod empirical;
pub mod envs;
pub mod error;
pub mod eval;
pub mod maxent;
pub mod robust;

pub use domain::{
    build_feature_map, ActionId, DemoSet, Demonstration, Discretizer, FeatureMap, FeatureSpec,
    StateId, Step, TaskSpec,
};
pub use empirical::{demo_stats, weighted_mixture, DemoStats, WeightVector, WeightedStats};
pub use error::{Error, Result};
pub use maxent::{fit_lambda, DualSolution, Policy, SolverOptions};
pub use robust::{fit_robust, weight_step, RobustModel, RobustOptions};
