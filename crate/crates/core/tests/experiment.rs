use std::path::{Path, PathBuf};

use qhybrid::data::synthetic::{teacher_dataset, write_dataset, TeacherSpec};
use qhybrid::exec::with_workers;
use qhybrid::experiment::grid::{self, search_points};
use qhybrid::experiment::holdout::{run_comparison, run_sweep_r};
use qhybrid::experiment::runner::load_prepared;
use qhybrid::experiment::{
    DatasetEntry, EncoderSettings, ExperimentPlan, Grid, GridPoint, Method, RunState,
};
use qhybrid::{Error, Exec};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/zenodo_style")
}

fn fixture_entry() -> DatasetEntry {
    let d = fixture_dir();
    DatasetEntry {
        drug: "Cetuximab".into(),
        expression: d.join("GDSC_exprs.Cetuximab.tsv"),
        response: d.join("GDSC_response.Cetuximab.tsv"),
        schema: Some(d.join("schema.json")),
        split_plan: None,
    }
}

fn tiny_plan(datasets: Vec<DatasetEntry>, out: &Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(datasets);
    plan.grid = Grid {
        qubits: vec![1, 2],
        encoding_layers: vec![1],
        variational_layers: vec![1],
        learning_rates: vec![1e-2],
    };
    plan.encoder = EncoderSettings { hidden1: 8, hidden2: 6 };
    plan.train.epochs = 3;
    plan.train.batch_size = 16;
    plan.preprocessing.repeats = 2;
    plan.preprocessing.folds = 3;
    plan.default_point = GridPoint {
        qubits: 2,
        encoding_layers: 1,
        variational_layers: 1,
        learning_rate: 1e-2,
    };
    plan.out = out.to_path_buf();
    plan.seed = 17;
    plan
}

fn synthetic_entry(dir: &Path, samples: usize) -> DatasetEntry {
    let ds = teacher_dataset("SYN", &TeacherSpec { samples, genes: 20, ..TeacherSpec::default() });
    let w = write_dataset(&ds, dir).unwrap();
    DatasetEntry {
        drug: "SYN".into(),
        expression: w.expression,
        response: w.response,
        schema: Some(w.schema),
        split_plan: None,
    }
}

#[test]
fn zenodo_style_fixture_runs_end_to_end() {
    let out = tempfile::tempdir().unwrap();
    let plan = tiny_plan(vec![fixture_entry()], out.path());
    let p = load_prepared(&plan, &plan.datasets[0]).unwrap();
    assert_eq!(p.samples.len(), 50);
    assert_eq!(p.split.test.len(), 5);
    assert!(p.genes.len() <= 30, "low-variance genes must be filtered");
    assert_eq!(p.samples.responders.iter().filter(|&&r| r).count(), 10);

    let outcome = grid::run_grid_search(&plan, &p, Method::ProposedMulti, Exec::Parallel).unwrap();
    assert_eq!(outcome.configs.len(), 2);
    assert!(!outcome.ranking.is_empty());
    for c in &outcome.configs {
        assert_eq!(c.runs.len(), 6);
        assert_eq!(c.count(RunState::Failed), 0);
    }
    let table = run_comparison(&plan, std::slice::from_ref(&p), Exec::Parallel).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.failures().is_empty(), "{:?}", table.failures());
    let csv = String::from_utf8(table.table_csv().unwrap()).unwrap();
    assert!(csv.starts_with("model,Cetuximab\n"));
}

#[test]
fn a_broken_config_is_recorded_and_the_search_continues() {
    let data = tempfile::tempdir().unwrap();
    let plan = tiny_plan(vec![synthetic_entry(data.path(), 80)], data.path());
    let p = load_prepared(&plan, &plan.datasets[0]).unwrap();
    let good = plan.default_point;
    let broken = GridPoint { learning_rate: -1.0, ..good };
    let mut points: Vec<GridPoint> = (0..10)
        .map(|i| GridPoint { learning_rate: 1e-3 * (i + 1) as f64, ..good })
        .collect();
    points.insert(4, broken);

    let outcome = search_points(&plan, &p, Method::ProposedMulti, &points, None, Exec::Parallel).unwrap();
    assert_eq!(outcome.configs[4].count(RunState::Failed), 6);
    assert!(outcome.configs[4].summary.is_none());
    assert_eq!(outcome.ranking.len(), 10);
    assert!(outcome.ranking.iter().all(|r| r.index != 4));

    points.insert(7, broken);
    let err = search_points(&plan, &p, Method::ProposedMulti, &points, None, Exec::Parallel).unwrap_err();
    assert!(matches!(err, Error::Aborted(_)), "{err}");
}

#[test]
fn grid_search_resumes_from_cached_configs() {
    let dir = tempfile::tempdir().unwrap();
    let plan = tiny_plan(vec![synthetic_entry(dir.path(), 80)], dir.path());
    let p = load_prepared(&plan, &plan.datasets[0]).unwrap();
    let first = grid::run_grid_search(&plan, &p, Method::Tanh, Exec::Parallel).unwrap();

    // A cached result is trusted as is: tamper with one to prove reuse.
    let cached = dir.path().join("grid/SYN/tanh/config_001.json");
    let mut c: grid::ConfigResult = serde_json::from_slice(&std::fs::read(&cached).unwrap()).unwrap();
    c.summary.as_mut().unwrap().best_auc = 2.0;
    std::fs::write(&cached, serde_json::to_vec(&c).unwrap()).unwrap();
    std::fs::remove_file(dir.path().join("grid/SYN/tanh/config_000.json")).unwrap();

    let second = grid::run_grid_search(&plan, &p, Method::Tanh, Exec::Parallel).unwrap();
    assert_eq!(second.configs[0], first.configs[0]);
    assert_eq!(second.best().unwrap().index, 1);
    assert_eq!(second.best().unwrap().best_mean_auc, 2.0);

    // A different plan invalidates the cache.
    let mut changed = plan.clone();
    changed.seed += 1;
    let third = grid::run_grid_search(&changed, &p, Method::Tanh, Exec::Parallel).unwrap();
    assert!(third.best().unwrap().best_mean_auc <= 1.0);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let data = tempfile::tempdir().unwrap();
    let plan = tiny_plan(vec![synthetic_entry(data.path(), 90)], data.path());
    let p = load_prepared(&plan, &plan.datasets[0]).unwrap();
    let run = |workers| {
        with_workers(Some(workers), || {
            let g = search_points(&plan, &p, Method::ProposedSingle, &plan.grid.points(), None, Exec::Parallel)
                .unwrap();
            let s = run_sweep_r(&plan, std::slice::from_ref(&p), Exec::Parallel).unwrap();
            (
                grid::ranking_csv(&g).unwrap(),
                grid::curves_csv(&g).unwrap(),
                s.table_csv().unwrap(),
            )
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    let seq = {
        let g = search_points(&plan, &p, Method::ProposedSingle, &plan.grid.points(), None, Exec::Sequential)
            .unwrap();
        grid::ranking_csv(&g).unwrap()
    };
    assert_eq!(one.0, seq);
}

#[test]
fn split_plan_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = tiny_plan(vec![synthetic_entry(dir.path(), 60)], dir.path());
    let p = load_prepared(&plan, &plan.datasets[0]).unwrap();
    let mut split = p.split.clone();
    split.test.swap(0, 1);
    let path = dir.path().join("split.json");
    std::fs::write(&path, serde_json::to_vec(&split).unwrap()).unwrap();
    plan.datasets[0].split_plan = Some(path.clone());
    plan.seed += 100;
    let q = load_prepared(&plan, &plan.datasets[0]).unwrap();
    assert_eq!(q.split, split);

    split.drug = "OTHER".into();
    std::fs::write(&path, serde_json::to_vec(&split).unwrap()).unwrap();
    assert!(load_prepared(&plan, &plan.datasets[0]).is_err());
}
