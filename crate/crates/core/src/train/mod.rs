//! Loss, optimizer and the epoch loop with early stopping.

mod adam;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use trainer::{
    early_stop_schedule, train, validation_auc, EarlyStopping, TrainConfig, TrainOutcome,
    TrainTrace, Verdict,
};

use crate::error::{Error, Result};

/// Mean squared error and its gradient `2(pred − target)/n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}
