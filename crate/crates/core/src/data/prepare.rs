use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::load::Dataset;
use super::split::{
    random_holdout, repeated_stratified_kfold, stratified_holdout, stratify, variance_filter,
    SplitPlan,
};
use super::SampleSet;
use crate::error::{Error, Result};
use crate::normalization::LabelNormalizer;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub test_fraction: f64,
    pub variance_threshold: f64,
    pub n_bins: usize,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            variance_threshold: 0.1,
            n_bins: 4,
            folds: 5,
            repeats: 10,
            seed: 0,
        }
    }
}

/// A dataset after gene filtering, label normalization and splitting.
///
/// Every statistic (gene variances, label mean/std, strata edges) is computed
/// on the training pool only; the held-out test rows never influence them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub drug: String,
    pub genes: Vec<String>,
    pub labels: LabelNormalizer,
    /// All joined samples restricted to `genes`, in dataset order.
    pub samples: SampleSet,
    pub split: SplitPlan,
}

impl Prepared {
    pub fn pool(&self) -> SampleSet {
        self.samples.select(&self.split.train)
    }

    pub fn test(&self) -> SampleSet {
        self.samples.select(&self.split.test)
    }

    /// `(train, validation)` for one CV repeat and fold.
    pub fn cv_fold(&self, repeat: usize, fold: usize) -> (SampleSet, SampleSet) {
        let folds = &self.split.folds[repeat].folds;
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..folds.len()).partition(|&i| folds[i] == fold);
        let pool = self.pool();
        (pool.select(&train), pool.select(&val))
    }

    /// The stratified 4:1 split of the training pool used with early stopping.
    pub fn inner_split(&self) -> (SampleSet, SampleSet) {
        let pool = self.pool();
        (pool.select(&self.split.inner_train), pool.select(&self.split.inner_val))
    }
}

/// Split, filter genes and normalize labels for one drug.
pub fn prepare(dataset: &Dataset, config: &PrepareConfig) -> Result<Prepared> {
    let n = dataset.responses.records.len();
    if n < 10 {
        return Err(Error::Config(format!(
            "{}: {n} samples is too few to split",
            dataset.drug
        )));
    }
    let seed = |purpose: &str| derive_seed(config.seed, &format!("{}/{purpose}", dataset.drug), &[]);
    let (train, test) = random_holdout(n, config.test_fraction, seed("holdout"))?;

    let log_ic50 = dataset.log_ic50();
    let labels = LabelNormalizer::fit(&train.iter().map(|&i| log_ic50[i]).collect::<Vec<_>>())?;
    let targets = labels.transform(&log_ic50);
    let strata = stratify(&train.iter().map(|&i| targets[i]).collect::<Vec<_>>(), config.n_bins);
    let (inner_train, inner_val) = stratified_holdout(&strata, 5, seed("inner"))?;
    let folds = repeated_stratified_kfold(&strata, config.folds, config.repeats, seed("cv"))?
        .into_iter()
        .enumerate()
        .map(|(repeat, folds)| super::split::FoldAssignment { repeat, folds })
        .collect();

    let split = SplitPlan {
        drug: dataset.drug.clone(),
        samples: dataset.expression.samples.clone(),
        train,
        test,
        strata,
        inner_train,
        inner_val,
        folds,
    };
    prepare_with_split(dataset, config, split)
}

/// Rebuild preprocessing from an existing split plan.
pub fn prepare_with_split(
    dataset: &Dataset,
    config: &PrepareConfig,
    split: SplitPlan,
) -> Result<Prepared> {
    let n = dataset.responses.records.len();
    split.validate(n)?;
    if split.samples != dataset.expression.samples {
        return Err(Error::Config(format!(
            "{}: split plan was made for a different sample list",
            dataset.drug
        )));
    }
    let log_ic50 = dataset.log_ic50();
    let labels =
        LabelNormalizer::fit(&split.train.iter().map(|&i| log_ic50[i]).collect::<Vec<_>>())?;
    let keep = variance_filter(
        dataset.expression.values.view(),
        &split.train,
        config.variance_threshold,
    )?;
    let genes = keep.iter().map(|&g| dataset.expression.genes[g].clone()).collect();
    let samples = SampleSet {
        x: dataset.expression.values.select(Axis(1), &keep),
        targets: labels.transform(&log_ic50),
        responders: dataset.responders(),
    };
    Ok(Prepared {
        drug: dataset.drug.clone(),
        genes,
        labels,
        samples,
        split,
    })
}
