//! Expression/response ingestion, preprocessing and split machinery.

mod load;
mod prepare;
mod split;
pub mod synthetic;

pub use load::{
    load_dataset, Dataset, ExpressionMatrix, LoadReport, Orientation, ResponseRecord,
    ResponseSchema, ResponseTable,
};
pub use prepare::{prepare, prepare_with_split, PrepareConfig, Prepared};
pub use split::{
    random_holdout, repeated_stratified_kfold, stratified_holdout, stratified_kfold, stratify,
    variance_filter, FoldAssignment, SplitPlan,
};

use ndarray::{Array2, Axis};

/// Rows ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub x: Array2<f64>,
    /// Normalized log(IC50) regression targets.
    pub targets: Vec<f64>,
    pub responders: Vec<bool>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> SampleSet {
        SampleSet {
            x: self.x.select(Axis(0), rows),
            targets: rows.iter().map(|&i| self.targets[i]).collect(),
            responders: rows.iter().map(|&i| self.responders[i]).collect(),
        }
    }
}
