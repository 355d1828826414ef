use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qhybrid::data::synthetic::{teacher_dataset, write_dataset, TeacherSpec};
use qhybrid::data::Prepared;
use qhybrid::exec::with_workers;
use qhybrid::experiment::emit::{check_genes, distribution, training_samples, DEFAULT_BINS};
use qhybrid::experiment::grid::{self, GridOutcome};
use qhybrid::experiment::holdout::{self, HoldoutTable};
use qhybrid::experiment::runner::{grid_summary_path, load_prepared, method_variant};
use qhybrid::experiment::{
    DatasetEntry, ExperimentPlan, GridPoint, Method, RunManifest, RunState,
};
use qhybrid::io::write_atomic;
use qhybrid::model::Checkpoint;
use qhybrid::seeds::derive_seed;
use qhybrid::Exec;

#[derive(Parser)]
#[command(name = "qhybrid", version, about = "Hybrid quantum-classical drug response experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment plan (JSON).
    #[arg(long)]
    plan: PathBuf,
    /// Output directory; overrides the plan.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides the plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Restrict to one drug from the plan.
    #[arg(long)]
    drug: Option<String>,
    /// Reuse an exported split plan (requires --drug when the plan lists several).
    #[arg(long)]
    split_plan: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PointArgs {
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    encoding_layers: Option<usize>,
    #[arg(long)]
    variational_layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl PointArgs {
    fn apply(&self, mut p: GridPoint) -> GridPoint {
        p.qubits = self.qubits.unwrap_or(p.qubits);
        p.encoding_layers = self.encoding_layers.unwrap_or(p.encoding_layers);
        p.variational_layers = self.variational_layers.unwrap_or(p.variational_layers);
        p.learning_rate = self.lr.unwrap_or(p.learning_rate);
        p
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated hyperparameter search.
    GridSearch {
        #[command(flatten)]
        common: Common,
        /// Methods to search; defaults to the proposed multi-head model.
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
    },
    /// Test-split comparison of all methods.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Independent seeded repetitions per cell.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Test-split sweep over `a` with `r` fixed.
    SweepA {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Test-split sweep over `r` with `a` fixed.
    SweepR {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Embedding distribution of a trained model on training samples.
    EmitDist {
        #[command(flatten)]
        common: Common,
        /// Trained checkpoint; when absent a model is trained first.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_method, default_value = "proposed_multi")]
        method: Method,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Mean validation AUC curves from grid-search results.
    EmitCurves {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
    },
    /// Train one model with early stopping and save its checkpoint.
    TrainOne {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method, default_value = "proposed_multi")]
        method: Method,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Write a synthetic dataset and a plan that uses it.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "SYN")]
        drug: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        genes: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GridSearch { .. } => "grid-search",
            Command::Compare { .. } => "compare",
            Command::SweepA { .. } => "sweep-a",
            Command::SweepR { .. } => "sweep-r",
            Command::EmitDist { .. } => "emit-dist",
            Command::EmitCurves { .. } => "emit-curves",
            Command::TrainOne { .. } => "train-one",
            Command::MakeSynthetic { .. } => "make-synthetic",
        }
    }
}

/// Result of a command: artifacts written and any per-run failures.
struct Report {
    manifest: RunManifest,
    out: PathBuf,
}

impl Report {
    fn artifacts(&mut self, paths: &[PathBuf]) -> Result<()> {
        self.manifest.add_artifacts(&self.out, paths)?;
        Ok(())
    }
}

fn load_plan(common: &Common) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(&common.plan)
        .with_context(|| format!("loading plan {}", common.plan.display()))?;
    if let Some(out) = &common.out {
        plan.out = out.clone();
    }
    if let Some(seed) = common.seed {
        plan.seed = seed;
    }
    if common.workers.is_some() {
        plan.workers = common.workers;
    }
    if let Some(drug) = &common.drug {
        plan.select_drug(drug)?;
    }
    if let Some(split) = &common.split_plan {
        if plan.datasets.len() != 1 {
            bail!("--split-plan needs a single dataset; select one with --drug");
        }
        plan.datasets[0].split_plan = Some(split.clone());
    }
    std::fs::create_dir_all(&plan.out)
        .with_context(|| format!("creating {}", plan.out.display()))?;
    Ok(plan)
}

/// Load every dataset and export its split plan.
fn prepare_all(plan: &ExperimentPlan, report: &mut Report) -> Result<Vec<Prepared>> {
    let dir = plan.out.join("splits");
    std::fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    for entry in &plan.datasets {
        let p = load_prepared(plan, entry).with_context(|| format!("preparing {}", entry.drug))?;
        log::info!(
            "{}: {} samples ({} train, {} test), {} genes kept",
            p.drug,
            p.samples.len(),
            p.split.train.len(),
            p.split.test.len(),
            p.genes.len()
        );
        let path = dir.join(format!("{}.json", p.drug));
        write_atomic(&path, &serde_json::to_vec_pretty(&p.split)?)?;
        report.artifacts(&[path])?;
        out.push(p);
    }
    Ok(out)
}

fn record_table(report: &mut Report, table: &HoldoutTable) -> Result<()> {
    let paths = table.write(&report.out)?;
    report.artifacts(&paths)?;
    for c in &table.cells {
        let n = |s| c.runs.iter().filter(|r| r.state == s).count();
        report.manifest.count(n(RunState::Ok), n(RunState::Skipped), n(RunState::Failed));
    }
    report.manifest.failures.extend(table.failures());
    Ok(())
}

fn record_grid(report: &mut Report, outcome: &GridOutcome) -> Result<()> {
    let paths = grid::write_outputs(outcome, &report.out)?;
    report.artifacts(&paths)?;
    for c in &outcome.configs {
        report.manifest.count(
            c.count(RunState::Ok),
            c.count(RunState::Skipped),
            c.count(RunState::Failed),
        );
        for r in c.runs.iter().filter(|r| r.state == RunState::Failed) {
            report.manifest.failures.push(format!(
                "{}/{} config {} repeat {} fold {:?}: {}",
                outcome.drug,
                outcome.method,
                c.index,
                r.repeat,
                r.fold,
                r.message.as_deref().unwrap_or("")
            ));
        }
    }
    Ok(())
}

fn methods_or_default(methods: &[Method]) -> Vec<Method> {
    if methods.is_empty() {
        vec![Method::ProposedMulti]
    } else {
        methods.to_vec()
    }
}

fn run_command(command: &Command, plan: &mut ExperimentPlan, report: &mut Report) -> Result<bool> {
    let exec = Exec::Parallel;
    match command {
        Command::GridSearch { method, .. } => {
            let prepared = prepare_all(plan, report)?;
            for p in &prepared {
                for m in methods_or_default(method) {
                    let outcome = grid::run_grid_search(plan, p, m, exec)?;
                    if let Some(best) = outcome.best() {
                        log::info!(
                            "{}/{m}: best {} mean AUC {:.4} at epoch {}",
                            p.drug,
                            best.config_id,
                            best.best_mean_auc,
                            best.best_epoch + 1
                        );
                    }
                    record_grid(report, &outcome)?;
                }
            }
            Ok(report.manifest.runs_failed == 0)
        }
        Command::Compare { repeats, .. }
        | Command::SweepA { repeats, .. }
        | Command::SweepR { repeats, .. } => {
            if let Some(r) = repeats {
                plan.test_repeats = *r;
                plan.validate()?;
            }
            let prepared = prepare_all(plan, report)?;
            let table = match command {
                Command::Compare { .. } => holdout::run_comparison(plan, &prepared, exec)?,
                Command::SweepA { .. } => holdout::run_sweep_a(plan, &prepared, exec)?,
                _ => holdout::run_sweep_r(plan, &prepared, exec)?,
            };
            record_table(report, &table)?;
            Ok(report.manifest.runs_failed == 0)
        }
        Command::TrainOne { method, point, .. } => {
            let prepared = prepare_all(plan, report)?;
            for p in &prepared {
                let mut v = method_variant(plan, *method, &p.drug);
                v.point = point.apply(v.point);
                let dir = report.out.join("train_one").join(format!("{}_{}", p.drug, method));
                let (summary, paths) = holdout::train_one(plan, p, &v, &dir, exec)?;
                log::info!(
                    "{}/{method}: test AUC {:.4}, best epoch {}",
                    p.drug,
                    summary.test_auc,
                    summary.best_epoch
                );
                report.artifacts(&paths)?;
                report.manifest.count(1, 0, 0);
            }
            Ok(true)
        }
        Command::EmitDist {
            checkpoint,
            method,
            samples,
            ..
        } => {
            let prepared = prepare_all(plan, report)?;
            if checkpoint.is_some() && prepared.len() != 1 {
                bail!("--checkpoint applies to one dataset; select it with --drug");
            }
            for p in &prepared {
                let ckpt_path = match checkpoint {
                    Some(c) => c.clone(),
                    None => {
                        let v = method_variant(plan, *method, &p.drug);
                        let dir = report.out.join("train_one").join(format!("{}_{}", p.drug, method));
                        let (_, paths) = holdout::train_one(plan, p, &v, &dir, exec)?;
                        report.artifacts(&paths)?;
                        paths[2].clone()
                    }
                };
                let ckpt = Checkpoint::load(&ckpt_path)?;
                check_genes(&ckpt.genes, p)?;
                let model = ckpt.model()?;
                let set = training_samples(p, *samples, derive_seed(plan.seed, &p.drug, &[]));
                let dist = distribution(&model, set.x.view(), DEFAULT_BINS)?;
                if let Some(c) = dist.summary.crowding {
                    log::info!("{}: {:.1}% of normalized values near the bound", p.drug, 100.0 * c);
                }
                let label = ckpt_label(&ckpt_path, &p.drug);
                let paths = dist.write(&report.out, &format!("distribution_{label}"))?;
                report.artifacts(&paths)?;
                report.manifest.count(1, 0, 0);
            }
            Ok(true)
        }
        Command::EmitCurves { method, .. } => {
            for entry in &plan.datasets {
                for m in methods_or_default(method) {
                    let src = grid_summary_path(&plan.out, &entry.drug, m);
                    let text = std::fs::read_to_string(&src).with_context(|| {
                        format!("reading {}; run grid-search first", src.display())
                    })?;
                    let outcome: GridOutcome = serde_json::from_str(&text)?;
                    let path = report.out.join(format!("curves_{}_{m}.csv", entry.drug));
                    write_atomic(&path, &grid::curves_csv(&outcome)?)?;
                    report.artifacts(&[path])?;
                }
            }
            Ok(true)
        }
        Command::MakeSynthetic { .. } => unreachable!("handled before plan loading"),
    }
}

fn ckpt_label(path: &Path, drug: &str) -> String {
    path.parent()
        .and_then(|d| d.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| s.starts_with(drug))
        .unwrap_or_else(|| drug.to_string())
}

fn make_synthetic(out: &Path, drug: &str, seed: u64, samples: usize, genes: usize) -> Result<()> {
    let spec = TeacherSpec {
        samples,
        genes,
        seed,
        ..TeacherSpec::default()
    };
    let ds = teacher_dataset(drug, &spec);
    let written = write_dataset(&ds, out)?;
    let rel = |p: &Path| PathBuf::from(p.file_name().expect("file name"));
    let mut plan = ExperimentPlan::new(vec![DatasetEntry {
        drug: drug.to_string(),
        expression: rel(&written.expression),
        response: rel(&written.response),
        schema: Some(rel(&written.schema)),
        split_plan: None,
    }]);
    plan.seed = seed;
    plan.out = PathBuf::from("runs");
    let plan_path = out.join("plan.json");
    write_atomic(&plan_path, &serde_json::to_vec_pretty(&plan)?)?;
    println!(
        "{}",
        json!({"status": "ok", "command": "make-synthetic", "plan": plan_path})
    );
    Ok(())
}

fn failure(command: &str, error: &anyhow::Error, failures: &[String]) -> ExitCode {
    let chain: Vec<String> = error.chain().map(|e| e.to_string()).collect();
    println!(
        "{}",
        json!({"status": "failed", "command": command, "error": chain.join(": "), "failures": failures})
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.command.name();

    let common = match &cli.command {
        Command::MakeSynthetic {
            out,
            drug,
            seed,
            samples,
            genes,
        } => {
            return match make_synthetic(out, drug, *seed, *samples, *genes) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => failure(name, &e, &[]),
            }
        }
        Command::GridSearch { common, .. }
        | Command::Compare { common, .. }
        | Command::SweepA { common, .. }
        | Command::SweepR { common, .. }
        | Command::EmitDist { common, .. }
        | Command::EmitCurves { common, .. }
        | Command::TrainOne { common, .. } => common,
    };

    let mut plan = match load_plan(common) {
        Ok(p) => p,
        Err(e) => return failure(name, &e, &[]),
    };
    let mut report = Report {
        manifest: RunManifest::start(name, plan.hash(), plan.seed),
        out: plan.out.clone(),
    };
    let workers = plan.workers;
    let result = with_workers(workers, || run_command(&cli.command, &mut plan, &mut report));
    let ok = matches!(result, Ok(true));
    let manifest_path = report.manifest.finish(&report.out, ok);

    match (result, manifest_path) {
        (Ok(true), Ok(path)) => {
            println!(
                "{}",
                json!({
                    "status": "ok",
                    "command": name,
                    "manifest": path,
                    "artifacts": report.manifest.artifacts.len(),
                    "runs_ok": report.manifest.runs_ok,
                    "runs_skipped": report.manifest.runs_skipped,
                })
            );
            ExitCode::SUCCESS
        }
        (Ok(false), _) => failure(
            name,
            &anyhow::anyhow!("{} run(s) failed", report.manifest.runs_failed),
            &report.manifest.failures,
        ),
        (Err(e), _) => failure(name, &e, &report.manifest.failures),
        (Ok(true), Err(e)) => failure(name, &e.into(), &report.manifest.failures),
    }
}
