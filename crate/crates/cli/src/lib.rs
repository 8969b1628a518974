//! Shared pieces of the `rment` command-line tool.

pub mod model;

pub use model::{ModelFile, SolverInfo, MODEL_VERSION};
