//! ROC AUC and cross-validation aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AUC as the Mann–Whitney probability that a random positive outscores a
/// random negative, ties counting one half. Uses average ranks, O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score at index {i}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative samples".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos_in_tie as f64;
        i = j + 1;
    }

    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Per-run evaluation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub drug: String,
    pub config_id: String,
    pub repeat: usize,
    /// CV fold; `None` for a holdout (test) evaluation.
    pub fold: Option<usize>,
    /// Validation AUC after each epoch.
    pub val_auc: Vec<f64>,
    pub best_auc: f64,
    /// 0-based epoch of `best_auc`.
    pub best_epoch: usize,
    /// AUC on the held-out test set, when one was evaluated.
    pub test_auc: Option<f64>,
}

/// Mean validation curve over many runs and its first maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub mean_auc: Vec<f64>,
    pub best_epoch: usize,
    pub best_auc: f64,
    pub runs: usize,
}

/// First index of the maximum; earlier epochs win ties.
pub fn first_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if v.partial_cmp(&values[b]) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn aggregate_cv(records: &[EvalRecord]) -> Result<CvSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::Aggregation("no records to aggregate".into()))?;
    let len = first.val_auc.len();
    if len == 0 {
        return Err(Error::Aggregation("empty AUC trace".into()));
    }
    if let Some(r) = records.iter().find(|r| r.val_auc.len() != len) {
        return Err(Error::Aggregation(format!(
            "trace lengths differ: {} vs {} (repeat {}, fold {:?})",
            len,
            r.val_auc.len(),
            r.repeat,
            r.fold
        )));
    }
    let n = records.len() as f64;
    let mean_auc: Vec<f64> = (0..len)
        .map(|e| records.iter().map(|r| r.val_auc[e]).sum::<f64>() / n)
        .collect();
    let best_epoch = first_argmax(&mean_auc).expect("non-empty");
    Ok(CvSummary {
        best_auc: mean_auc[best_epoch],
        mean_auc,
        best_epoch,
        runs: records.len(),
    })
}
