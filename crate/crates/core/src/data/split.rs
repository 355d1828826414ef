use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Genes whose population variance over `train_rows` exceeds `threshold`.
pub fn variance_filter(
    values: ArrayView2<f64>,
    train_rows: &[usize],
    threshold: f64,
) -> Result<Vec<usize>> {
    if train_rows.len() < 2 {
        return Err(Error::Config("variance filter needs at least 2 training rows".into()));
    }
    let n = train_rows.len() as f64;
    let keep: Vec<usize> = (0..values.ncols())
        .filter(|&g| {
            let col = values.column(g);
            let mean = train_rows.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = train_rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / n;
            var > threshold
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::Config(format!(
            "no gene has training variance above {threshold}"
        )));
    }
    Ok(keep)
}

/// Equal-width bins between the label minimum and maximum. Bins are
/// half-open `[lo, hi)` except the last, which also takes the maximum.
/// Constant labels all land in bin 0.
pub fn stratify(labels: &[f64], n_bins: usize) -> Vec<usize> {
    let n_bins = n_bins.max(1);
    let (lo, hi) = labels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        if !labels.is_empty() {
            log::warn!("stratification labels are constant; using a single stratum");
        }
        return vec![0; labels.len()];
    }
    let edges: Vec<f64> = (1..n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect();
    labels
        .iter()
        .map(|&v| edges.iter().take_while(|&&e| v >= e).count())
        .collect()
}

/// Fold index per sample. Within each stratum samples are shuffled and dealt
/// round-robin; the dealing position carries over between strata so overall
/// fold sizes also differ by at most one.
pub fn stratified_kfold(strata: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > strata.len() {
        return Err(Error::Config(format!(
            "{k} folds requested for {} samples",
            strata.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_strata = strata.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, &s) in strata.iter().enumerate() {
        members[s].push(i);
    }
    let mut folds = vec![0; strata.len()];
    let mut next = 0;
    for group in &mut members {
        group.shuffle(&mut rng);
        for &i in group.iter() {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Fold assignments for each repeat; repeat `r` uses a seed derived from
/// `(seed, r)`.
pub fn repeated_stratified_kfold(
    strata: &[usize],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    (0..repeats)
        .map(|r| stratified_kfold(strata, k, derive_seed(seed, "kfold", &[r as u64])))
        .collect()
}

/// Unstratified random split; returns sorted `(train, test)` indices.
pub fn random_holdout(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Config(format!(
            "cannot hold out {test_fraction} of {n} samples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Stratified `(k−1):1` split: fold 0 of a stratified k-fold is the
/// validation part. Indices refer to positions in `strata`.
pub fn stratified_holdout(strata: &[usize], k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let folds = stratified_kfold(strata, k, seed)?;
    let (val, train): (Vec<usize>, Vec<usize>) = (0..strata.len()).partition(|&i| folds[i] == 0);
    Ok((train, val))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub repeat: usize,
    /// Fold of each training-pool sample.
    pub folds: Vec<usize>,
}

/// Every split used by an experiment, exportable for audit and reusable to
/// reproduce a run exactly. Indices refer to rows of the joined dataset;
/// `strata`, `inner_*` and `folds` refer to positions within `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub drug: String,
    pub samples: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub strata: Vec<usize>,
    pub inner_train: Vec<usize>,
    pub inner_val: Vec<usize>,
    pub folds: Vec<FoldAssignment>,
}

impl SplitPlan {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        let mut seen = vec![false; n_samples];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n_samples || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("split index {i} out of range or repeated")));
            }
        }
        let m = self.train.len();
        if self.strata.len() != m || self.folds.iter().any(|f| f.folds.len() != m) {
            return Err(Error::Config("split plan arrays do not match the training pool".into()));
        }
        let mut inner = vec![false; m];
        for &i in self.inner_train.iter().chain(&self.inner_val) {
            if i >= m || std::mem::replace(&mut inner[i], true) {
                return Err(Error::Config(format!("inner split index {i} invalid")));
            }
        }
        Ok(())
    }
}
