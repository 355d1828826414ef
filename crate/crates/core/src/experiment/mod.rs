//! Experiment drivers: grid search, holdout comparisons, sweeps and
//! diagnostic emitters, each writing CSV/JSON artifacts plus a manifest.

pub mod emit;
pub mod grid;
pub mod holdout;
pub mod manifest;
pub mod plan;
pub mod runner;

pub use grid::{run_grid_search, search_points, ConfigResult, GridOutcome, RankedConfig};
pub use holdout::{run_holdout_table, HoldoutTable};
pub use manifest::{Artifact, RunManifest};
pub use plan::{
    DatasetEntry, EncoderSettings, ExperimentPlan, Grid, GridPoint, Method, TrainSettings,
    SWEEP_A, SWEEP_R,
};
pub use runner::{load_prepared, RunResult, RunState, Variant};
