//! Test-split evaluations: the method comparison and the `a`/`r` sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::records_csv;
use super::plan::{ExperimentPlan, Method};
use super::runner::{holdout_result, method_variant, RunResult, RunState, Variant};
use crate::data::Prepared;
use crate::error::Result;
use crate::exec::Exec;
use crate::io::{csv_bytes, write_atomic};
use crate::normalization::NormalizationSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutCell {
    pub row: String,
    pub drug: String,
    pub config_id: String,
    pub runs: Vec<RunResult>,
}

impl HoldoutCell {
    /// Mean test AUC over finished repeats.
    pub fn mean_test_auc(&self) -> Option<f64> {
        let aucs: Vec<f64> = self
            .runs
            .iter()
            .filter_map(|r| r.record.as_ref().and_then(|rec| rec.test_auc))
            .collect();
        (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
    }
}

/// Rows are model variants, columns are drugs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutTable {
    pub name: String,
    pub plan_hash: String,
    pub rows: Vec<String>,
    pub drugs: Vec<String>,
    /// Row-major cells.
    pub cells: Vec<HoldoutCell>,
}

impl HoldoutTable {
    pub fn cell(&self, row: &str, drug: &str) -> Option<&HoldoutCell> {
        self.cells.iter().find(|c| c.row == row && c.drug == drug)
    }

    pub fn failures(&self) -> Vec<String> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.runs.iter().filter(|r| r.state == RunState::Failed).map(move |r| {
                    format!(
                        "{}/{} repeat {}: {}",
                        c.drug,
                        c.row,
                        r.repeat,
                        r.message.as_deref().unwrap_or("")
                    )
                })
            })
            .collect()
    }

    pub fn table_csv(&self) -> Result<Vec<u8>> {
        let mut header = vec!["model"];
        header.extend(self.drugs.iter().map(String::as_str));
        let rows = self.rows.iter().map(|row| {
            let mut line = vec![row.clone()];
            for d in &self.drugs {
                line.push(
                    self.cell(row, d)
                        .and_then(HoldoutCell::mean_test_auc)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            line
        });
        csv_bytes(&header, rows)
    }

    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        let records = self
            .cells
            .iter()
            .flat_map(|c| c.runs.iter().filter_map(|r| r.record.as_ref()));
        let files = [
            (format!("{}.csv", self.name), self.table_csv()?),
            (format!("{}_records.csv", self.name), records_csv(records)?),
            (format!("{}.json", self.name), serde_json::to_vec_pretty(self)?),
        ];
        let mut paths = Vec::new();
        for (name, bytes) in files {
            let p = out.join(name);
            write_atomic(&p, &bytes)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Evaluate every variant on every dataset `plan.test_repeats` times.
/// `variants` is called once per dataset and must return the same labels
/// in the same order each time.
pub fn run_holdout_table(
    name: &str,
    plan: &ExperimentPlan,
    prepared: &[Prepared],
    variants: impl Fn(&Prepared) -> Vec<Variant>,
    exec: Exec,
) -> Result<HoldoutTable> {
    let per_drug: Vec<Vec<Variant>> = prepared.iter().map(&variants).collect();
    let rows: Vec<String> = per_drug
        .first()
        .map(|v| v.iter().map(|x| x.label.clone()).collect())
        .unwrap_or_default();
    let repeats = plan.test_repeats;

    let mut jobs = Vec::new();
    for (row_idx, row) in rows.iter().enumerate() {
        for (d, vs) in per_drug.iter().enumerate() {
            let v = vs.get(row_idx).filter(|v| &v.label == row).ok_or_else(|| {
                crate::Error::Config(format!("variant {row} missing for {}", prepared[d].drug))
            })?;
            jobs.push((d, v.clone()));
        }
    }
    let results = exec.map_range(jobs.len() * repeats, |i| {
        let (d, v) = &jobs[i / repeats];
        holdout_result(plan, &prepared[*d], v, i % repeats, Exec::Sequential)
    });

    let cells = jobs
        .iter()
        .zip(results.chunks(repeats))
        .map(|((d, v), runs)| HoldoutCell {
            row: v.label.clone(),
            drug: prepared[*d].drug.clone(),
            config_id: super::runner::config_id(v),
            runs: runs.to_vec(),
        })
        .collect();
    Ok(HoldoutTable {
        name: name.to_string(),
        plan_hash: plan.hash(),
        rows,
        drugs: prepared.iter().map(|p| p.drug.clone()).collect(),
        cells,
    })
}

pub fn run_comparison(plan: &ExperimentPlan, prepared: &[Prepared], exec: Exec) -> Result<HoldoutTable> {
    run_holdout_table(
        "comparison",
        plan,
        prepared,
        |p| plan.methods.iter().map(|&m| method_variant(plan, m, &p.drug)).collect(),
        exec,
    )
}

/// Proposed model (multi head) over `a` with `r` fixed to the plan's `r`.
pub fn run_sweep_a(plan: &ExperimentPlan, prepared: &[Prepared], exec: Exec) -> Result<HoldoutTable> {
    sweep("sweep_a", plan, prepared, exec, |a| (a, plan.r), &plan.a_values)
}

/// Proposed model (multi head) over `r` with `a` fixed to the plan's `a`.
pub fn run_sweep_r(plan: &ExperimentPlan, prepared: &[Prepared], exec: Exec) -> Result<HoldoutTable> {
    sweep("sweep_r", plan, prepared, exec, |r| (plan.a, r), &plan.r_values)
}

fn sweep(
    name: &str,
    plan: &ExperimentPlan,
    prepared: &[Prepared],
    exec: Exec,
    pair: impl Fn(f64) -> (f64, f64),
    values: &[f64],
) -> Result<HoldoutTable> {
    for &v in values {
        let (a, r) = pair(v);
        NormalizationSpec::gradual_tanh(a, r).validate()?;
    }
    run_holdout_table(
        name,
        plan,
        prepared,
        |p| {
            let base = method_variant(plan, Method::ProposedMulti, &p.drug);
            values
                .iter()
                .map(|&v| {
                    let (a, r) = pair(v);
                    Variant {
                        label: format!("a={a},r={}pi", r / std::f64::consts::PI),
                        gradual: (a, r),
                        ..base.clone()
                    }
                })
                .collect()
        },
        exec,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub drug: String,
    pub config_id: String,
    pub method: Method,
    pub point: super::plan::GridPoint,
    pub gradual_a: f64,
    pub gradual_r: f64,
    pub epochs_run: usize,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub test_auc: f64,
    pub stopped_early: bool,
    pub final_train_loss: f64,
}

/// Train one variant with early stopping and write its trace, summary and
/// checkpoint under `dir`.
pub fn train_one(
    plan: &ExperimentPlan,
    prepared: &Prepared,
    variant: &Variant,
    dir: &Path,
    exec: Exec,
) -> Result<(TrainSummary, Vec<PathBuf>)> {
    let (record, outcome) = super::runner::holdout_run(plan, prepared, variant, 0, exec)?;
    let trace = &outcome.trace;
    let summary = TrainSummary {
        drug: prepared.drug.clone(),
        config_id: record.config_id.clone(),
        method: variant.method,
        point: variant.point,
        gradual_a: variant.gradual.0,
        gradual_r: variant.gradual.1,
        epochs_run: trace.epochs_run(),
        best_epoch: trace.best_epoch + 1,
        best_val_auc: trace.best_auc,
        test_auc: record.test_auc.unwrap_or(f64::NAN),
        stopped_early: trace.stopped_early,
        final_train_loss: trace.train_loss.last().copied().unwrap_or(f64::NAN),
    };
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let trace_path = dir.join("trace.csv");
    write_atomic(&trace_path, &trace.to_csv()?)?;
    let summary_path = dir.join("summary.json");
    write_atomic(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;
    let ckpt_path = dir.join("checkpoint.json");
    crate::model::Checkpoint::new(&outcome.best, prepared.genes.clone(), Some(prepared.labels))
        .save(&ckpt_path)?;
    Ok((summary, vec![trace_path, summary_path, ckpt_path]))
}
