//! Repeated stratified k-fold grid search.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{ExperimentPlan, GridPoint, Method};
use super::runner::{cv_run, RunResult, RunState, Variant};
use crate::data::Prepared;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::io::{csv_bytes, write_atomic};
use crate::metrics::{aggregate_cv, CvSummary, EvalRecord};

/// Share of planned runs allowed to fail before the search aborts.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub plan_hash: String,
    pub method: Method,
    pub index: usize,
    pub point: GridPoint,
    pub runs: Vec<RunResult>,
    /// `None` when no run finished.
    pub summary: Option<CvSummary>,
}

impl ConfigResult {
    pub fn count(&self, state: RunState) -> usize {
        self.runs.iter().filter(|r| r.state == state).count()
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.runs.iter().filter_map(|r| r.record.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig {
    pub rank: usize,
    pub index: usize,
    pub config_id: String,
    pub point: GridPoint,
    pub best_mean_auc: f64,
    /// 0-based.
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub drug: String,
    pub method: Method,
    pub plan_hash: String,
    pub ranking: Vec<RankedConfig>,
    pub configs: Vec<ConfigResult>,
}

impl GridOutcome {
    pub fn best(&self) -> Option<&RankedConfig> {
        self.ranking.first()
    }

    pub fn failed_runs(&self) -> usize {
        self.configs.iter().map(|c| c.count(RunState::Failed)).sum()
    }
}

/// Order by best mean AUC (descending), then earlier best epoch, then grid
/// order.
pub fn rank(configs: &[ConfigResult]) -> Vec<RankedConfig> {
    let mut scored: Vec<(&ConfigResult, &CvSummary)> = configs
        .iter()
        .filter_map(|c| c.summary.as_ref().map(|s| (c, s)))
        .collect();
    scored.sort_by(|(ca, a), (cb, b)| {
        b.best_auc
            .total_cmp(&a.best_auc)
            .then(a.best_epoch.cmp(&b.best_epoch))
            .then(ca.index.cmp(&cb.index))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(rank, (c, s))| RankedConfig {
            rank: rank + 1,
            index: c.index,
            config_id: c.point.id(),
            point: c.point,
            best_mean_auc: s.best_auc,
            best_epoch: s.best_epoch,
        })
        .collect()
}

fn cache_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("config_{index:03}.json"))
}

fn load_cached(dir: &Path, index: usize, hash: &str, point: &GridPoint) -> Option<ConfigResult> {
    let text = std::fs::read_to_string(cache_file(dir, index)).ok()?;
    let cached: ConfigResult = serde_json::from_str(&text).ok()?;
    (cached.plan_hash == hash && cached.point == *point).then_some(cached)
}

/// Cross-validate every point. With `cache_dir`, finished configurations are
/// stored one file each and reused on the next call, so an interrupted
/// search resumes where it stopped.
pub fn search_points(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    method: Method,
    points: &[GridPoint],
    cache_dir: Option<&Path>,
    exec: Exec,
) -> Result<GridOutcome> {
    let hash = plan.hash();
    let repeats = prepared.split.folds.len();
    let folds = prepared
        .split
        .folds
        .first()
        .and_then(|f| f.folds.iter().max())
        .map_or(0, |m| m + 1);
    let per_config = repeats * folds;
    let planned = (points.len() * per_config) as f64;
    let mut failed = 0usize;
    let mut configs = Vec::with_capacity(points.len());

    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    for (index, point) in points.iter().enumerate() {
        let cached = cache_dir.and_then(|d| load_cached(d, index, &hash, point));
        let result = match cached {
            Some(c) => {
                log::info!("{}/{method}: config {index} restored from cache", prepared.drug);
                c
            }
            None => {
                let variant = Variant {
                    label: method.name().to_string(),
                    method,
                    point: *point,
                    gradual: (plan.a, plan.r),
                };
                // Runs are the unit of parallelism; each model runs sequentially.
                let runs = exec.map_range(per_config, |i| {
                    cv_run(plan, prepared, &variant, index, i / folds, i % folds, Exec::Sequential)
                });
                let records: Vec<EvalRecord> =
                    runs.iter().filter_map(|r| r.record.clone()).collect();
                let summary = if records.is_empty() {
                    None
                } else {
                    Some(aggregate_cv(&records)?)
                };
                let result = ConfigResult {
                    plan_hash: hash.clone(),
                    method,
                    index,
                    point: *point,
                    runs,
                    summary,
                };
                if let Some(dir) = cache_dir {
                    write_atomic(&cache_file(dir, index), &serde_json::to_vec_pretty(&result)?)?;
                }
                result
            }
        };
        failed += result.count(RunState::Failed);
        log::info!(
            "{}/{method}: config {index} ({}) ok={} skipped={} failed={}",
            prepared.drug,
            point.id(),
            result.count(RunState::Ok),
            result.count(RunState::Skipped),
            result.count(RunState::Failed)
        );
        configs.push(result);
        if failed as f64 > MAX_FAILURE_RATE * planned {
            return Err(Error::Aborted(format!(
                "{failed} of {planned} planned runs failed (limit {:.0}%)",
                MAX_FAILURE_RATE * 100.0
            )));
        }
    }

    Ok(GridOutcome {
        drug: prepared.drug.clone(),
        method,
        plan_hash: hash,
        ranking: rank(&configs),
        configs,
    })
}

pub fn run_grid_search(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    method: Method,
    exec: Exec,
) -> Result<GridOutcome> {
    let cache = plan.out.join("grid").join(&prepared.drug).join(method.name());
    search_points(plan, prepared, method, &plan.grid.points(), Some(&cache), exec)
}

/// Top-ranked point stored in a grid summary file.
pub fn best_point(summary: &Path) -> Option<GridPoint> {
    let text = std::fs::read_to_string(summary).ok()?;
    let outcome: GridOutcome = serde_json::from_str(&text).ok()?;
    outcome.best().map(|b| b.point)
}

pub fn ranking_csv(outcome: &GridOutcome) -> Result<Vec<u8>> {
    let header = [
        "rank",
        "config_index",
        "config_id",
        "qubits",
        "encoding_layers",
        "variational_layers",
        "learning_rate",
        "best_mean_auc",
        "best_epoch",
        "runs_ok",
        "runs_skipped",
        "runs_failed",
    ];
    let rows = outcome.ranking.iter().map(|r| {
        let c = &outcome.configs[r.index];
        vec![
            r.rank.to_string(),
            r.index.to_string(),
            r.config_id.clone(),
            r.point.qubits.to_string(),
            r.point.encoding_layers.to_string(),
            r.point.variational_layers.to_string(),
            r.point.learning_rate.to_string(),
            r.best_mean_auc.to_string(),
            (r.best_epoch + 1).to_string(),
            c.count(RunState::Ok).to_string(),
            c.count(RunState::Skipped).to_string(),
            c.count(RunState::Failed).to_string(),
        ]
    });
    csv_bytes(&header, rows)
}

/// Mean validation AUC per epoch for every configuration, with the first
/// maximum marked.
pub fn curves_csv(outcome: &GridOutcome) -> Result<Vec<u8>> {
    let header = ["config_index", "config_id", "epoch", "mean_auc", "is_best"];
    let mut rows = Vec::new();
    for c in &outcome.configs {
        if let Some(s) = &c.summary {
            for (e, v) in s.mean_auc.iter().enumerate() {
                rows.push(vec![
                    c.index.to_string(),
                    c.point.id(),
                    (e + 1).to_string(),
                    v.to_string(),
                    u8::from(e == s.best_epoch).to_string(),
                ]);
            }
        }
    }
    csv_bytes(&header, rows)
}

pub fn records_csv<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<Vec<u8>> {
    let header = [
        "drug",
        "config_id",
        "repeat",
        "fold",
        "best_auc",
        "best_epoch",
        "test_auc",
        "val_auc",
    ];
    let rows = records.into_iter().map(|r| {
        vec![
            r.drug.clone(),
            r.config_id.clone(),
            r.repeat.to_string(),
            r.fold.map(|f| f.to_string()).unwrap_or_default(),
            r.best_auc.to_string(),
            (r.best_epoch + 1).to_string(),
            r.test_auc.map(|t| t.to_string()).unwrap_or_default(),
            r.val_auc.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        ]
    });
    csv_bytes(&header, rows)
}

/// Write ranking, curves, records and the JSON summary; returns the paths.
pub fn write_outputs(outcome: &GridOutcome, out: &Path) -> Result<Vec<PathBuf>> {
    let stem = format!("{}_{}", outcome.drug, outcome.method);
    let files = [
        (format!("grid_{stem}.csv"), ranking_csv(outcome)?),
        (format!("curves_{stem}.csv"), curves_csv(outcome)?),
        (
            format!("records_{stem}.csv"),
            records_csv(outcome.configs.iter().flat_map(|c| c.records()))?,
        ),
        (format!("grid_{stem}.json"), serde_json::to_vec_pretty(outcome)?),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let p = out.join(name);
        write_atomic(&p, &bytes)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(index: usize, auc: f64, epoch: usize) -> ConfigResult {
        ConfigResult {
            plan_hash: String::new(),
            method: Method::ProposedMulti,
            index,
            point: GridPoint {
                qubits: 4,
                encoding_layers: 2,
                variational_layers: 1,
                learning_rate: index as f64,
            },
            runs: vec![],
            summary: Some(CvSummary {
                mean_auc: vec![auc],
                best_epoch: epoch,
                best_auc: auc,
                runs: 1,
            }),
        }
    }

    #[test]
    fn ranking_tie_breaks() {
        let mut none = cfg(4, 0.9, 0);
        none.summary = None;
        let configs = vec![cfg(0, 0.7, 3), cfg(1, 0.8, 5), cfg(2, 0.8, 2), cfg(3, 0.8, 2), none];
        let order: Vec<usize> = rank(&configs).iter().map(|r| r.index).collect();
        assert_eq!(order, vec![2, 3, 1, 0]);
    }
}
