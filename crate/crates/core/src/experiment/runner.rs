//! Single training runs shared by every experiment command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{DatasetEntry, ExperimentPlan, GridPoint, Method};
use crate::data::{prepare, prepare_with_split, Prepared, SampleSet, SplitPlan};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::EvalRecord;
use crate::model::{HybridModel, ModelConfig};
use crate::seeds::derive_seed;
use crate::train::{train, validation_auc, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Ok,
    /// Not trainable for a data reason, e.g. a single-class validation fold.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub repeat: usize,
    pub fold: Option<usize>,
    pub state: RunState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<EvalRecord>,
}

impl RunResult {
    fn from_result(repeat: usize, fold: Option<usize>, r: Result<EvalRecord>) -> Self {
        let (state, message, record) = match r {
            Ok(rec) => (RunState::Ok, None, Some(rec)),
            Err(e @ Error::UndefinedMetric(_)) => (RunState::Skipped, Some(e.to_string()), None),
            Err(e) => (RunState::Failed, Some(e.to_string()), None),
        };
        if let Some(m) = &message {
            log::warn!("run repeat={repeat} fold={fold:?}: {m}");
        }
        Self {
            repeat,
            fold,
            state,
            message,
            record,
        }
    }
}

/// Everything that identifies one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub method: Method,
    pub point: GridPoint,
    /// `(a, r)` of the proposed normalization.
    pub gradual: (f64, f64),
}

impl Variant {
    pub fn model_config(&self, input_dim: usize, hidden: (usize, usize)) -> ModelConfig {
        self.method.model_config(input_dim, &self.point, self.gradual, hidden)
    }
}

fn single_class(set: &SampleSet) -> bool {
    let pos = set.responders.iter().filter(|&&r| r).count();
    pos == 0 || pos == set.len()
}

/// One CV run without early stopping.
pub fn cv_run(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    variant: &Variant,
    config_index: usize,
    repeat: usize,
    fold: usize,
    exec: Exec,
) -> RunResult {
    let result = (|| {
        let (train_set, val_set) = prepared.cv_fold(repeat, fold);
        if single_class(&val_set) {
            return Err(Error::UndefinedMetric(format!(
                "validation fold {fold} of repeat {repeat} has a single class"
            )));
        }
        let seed = derive_seed(
            plan.seed,
            &format!("{}/{}", prepared.drug, variant.method),
            &[config_index as u64, repeat as u64, fold as u64],
        );
        let model = build_model(plan, prepared, variant, seed, exec)?;
        let cfg = plan.train.config(variant.point.learning_rate, false, seed);
        let out = train(model, &train_set, &val_set, &cfg)?;
        Ok(EvalRecord {
            drug: prepared.drug.clone(),
            config_id: config_id(variant),
            repeat,
            fold: Some(fold),
            val_auc: out.trace.val_auc.clone(),
            best_auc: out.trace.best_auc,
            best_epoch: out.trace.best_epoch,
            test_auc: None,
        })
    })();
    RunResult::from_result(repeat, Some(fold), result)
}

/// Train on the inner 4:1 split with early stopping and evaluate the best
/// snapshot once on the test split.
pub fn holdout_run(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    variant: &Variant,
    repeat: usize,
    exec: Exec,
) -> Result<(EvalRecord, TrainOutcome)> {
    let (train_set, val_set) = prepared.inner_split();
    let test = prepared.test();
    if single_class(&val_set) {
        return Err(Error::UndefinedMetric("inner validation split has a single class".into()));
    }
    let seed = derive_seed(
        plan.seed,
        &format!("{}/{}", prepared.drug, variant.label),
        &[repeat as u64],
    );
    let model = build_model(plan, prepared, variant, seed, exec)?;
    let cfg = plan.train.config(variant.point.learning_rate, true, seed);
    let out = train(model, &train_set, &val_set, &cfg)?;
    let test_auc = validation_auc(&out.best, &test)?;
    let record = EvalRecord {
        drug: prepared.drug.clone(),
        config_id: config_id(variant),
        repeat,
        fold: None,
        val_auc: out.trace.val_auc.clone(),
        best_auc: out.trace.best_auc,
        best_epoch: out.trace.best_epoch,
        test_auc: Some(test_auc),
    };
    Ok((record, out))
}

pub fn holdout_result(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    variant: &Variant,
    repeat: usize,
    exec: Exec,
) -> RunResult {
    let r = holdout_run(plan, prepared, variant, repeat, exec).map(|(rec, _)| rec);
    RunResult::from_result(repeat, None, r)
}

fn build_model(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    variant: &Variant,
    seed: u64,
    exec: Exec,
) -> Result<HybridModel> {
    let cfg = variant.model_config(prepared.genes.len(), plan.hidden());
    Ok(HybridModel::new(cfg, derive_seed(seed, "init", &[]))?.with_exec(exec))
}

pub fn config_id(variant: &Variant) -> String {
    format!("{}:{}", variant.label, variant.point.id())
}

/// Load and split a dataset, reusing its split plan when one is given.
pub fn load_prepared(plan: &ExperimentPlan, entry: &DatasetEntry) -> Result<Prepared> {
    let dataset = entry.load()?;
    let cfg = plan.prepare_config();
    match &entry.split_plan {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let split: SplitPlan = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            if split.drug != entry.drug {
                return Err(Error::Config(format!(
                    "split plan {} is for {:?}, not {:?}",
                    path.display(),
                    split.drug,
                    entry.drug
                )));
            }
            prepare_with_split(&dataset, &cfg, split)
        }
        None => prepare(&dataset, &cfg),
    }
}

pub fn grid_summary_path(out: &Path, drug: &str, method: Method) -> PathBuf {
    out.join(format!("grid_{drug}_{method}.json"))
}

/// Hyperparameters for a method: the top grid-search result when one exists
/// under the output directory, else the plan's per-method entry, else its
/// default point.
pub fn choose_point(plan: &ExperimentPlan, method: Method, drug: &str) -> GridPoint {
    if let Some(p) = super::grid::best_point(&grid_summary_path(&plan.out, drug, method)) {
        return p;
    }
    plan.method_points.get(&method).copied().unwrap_or(plan.default_point)
}

pub fn method_variant(plan: &ExperimentPlan, method: Method, drug: &str) -> Variant {
    Variant {
        label: method.name().to_string(),
        method,
        point: choose_point(plan, method, drug),
        gradual: (plan.a, plan.r),
    }
}
