use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, Dataset, PrepareConfig, ResponseSchema};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::model::{ModelConfig, DEFAULT_HIDDEN1, DEFAULT_HIDDEN2};
use crate::normalization::NormalizationSpec;
use crate::sim::{CircuitConfig, MeasurementHead};
use crate::train::{AdamConfig, TrainConfig};

/// Values of `a` swept with `r = π/2`.
pub const SWEEP_A: [f64; 5] = [0.5, 1.0, 10.0, 20.0, 100.0];
/// Values of `r` swept with `a = 20`.
pub const SWEEP_R: [f64; 8] = [
    PI / 4.0,
    PI / 2.0,
    3.0 * PI / 4.0,
    PI,
    3.0 * PI / 2.0,
    2.0 * PI,
    4.0 * PI,
    8.0 * PI,
];
pub const DEFAULT_A: f64 = 20.0;
pub const DEFAULT_R: f64 = PI / 2.0;

/// Model variants compared on the test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Encoder plus one linear layer; no normalization, no circuit.
    Classic,
    Identity,
    LayerNorm,
    Tanh,
    ProposedMulti,
    ProposedSingle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Classic,
        Method::Identity,
        Method::LayerNorm,
        Method::Tanh,
        Method::ProposedMulti,
        Method::ProposedSingle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Classic => "classic",
            Method::Identity => "identity",
            Method::LayerNorm => "layer_norm",
            Method::Tanh => "tanh",
            Method::ProposedMulti => "proposed_multi",
            Method::ProposedSingle => "proposed_single",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Model for this method at one grid point. `gradual` supplies the
    /// `(a, r)` pair used by the proposed variants.
    pub fn model_config(
        self,
        input_dim: usize,
        point: &GridPoint,
        gradual: (f64, f64),
        hidden: (usize, usize),
    ) -> ModelConfig {
        let circuit = |head| {
            CircuitConfig::new(point.qubits, point.encoding_layers, point.variational_layers, head)
        };
        let quantum = |norm, head| ModelConfig::quantum(input_dim, circuit(head), norm);
        let (a, r) = gradual;
        let cfg = match self {
            Method::Classic => {
                ModelConfig::classic(input_dim, point.qubits * point.encoding_layers)
            }
            Method::Identity => quantum(NormalizationSpec::Identity, MeasurementHead::Multi),
            Method::LayerNorm => quantum(NormalizationSpec::LayerNorm, MeasurementHead::Multi),
            Method::Tanh => quantum(NormalizationSpec::Tanh, MeasurementHead::Multi),
            Method::ProposedMulti => {
                quantum(NormalizationSpec::gradual_tanh(a, r), MeasurementHead::Multi)
            }
            Method::ProposedSingle => {
                quantum(NormalizationSpec::gradual_tanh(a, r), MeasurementHead::Single)
            }
        };
        cfg.with_hidden(hidden.0, hidden.1)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One hyperparameter combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub qubits: usize,
    pub encoding_layers: usize,
    pub variational_layers: usize,
    pub learning_rate: f64,
}

impl GridPoint {
    pub fn id(&self) -> String {
        format!(
            "q{}_e{}_v{}_lr{:e}",
            self.qubits, self.encoding_layers, self.variational_layers, self.learning_rate
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub qubits: Vec<usize>,
    pub encoding_layers: Vec<usize>,
    pub variational_layers: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            qubits: vec![4, 8],
            encoding_layers: vec![2, 4],
            variational_layers: vec![1, 2, 4],
            learning_rates: vec![1e-6, 1e-5, 1e-4],
        }
    }
}

impl Grid {
    /// Lexicographic enumeration: qubits, then encoding layers, variational
    /// layers and learning rate.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &qubits in &self.qubits {
            for &encoding_layers in &self.encoding_layers {
                for &variational_layers in &self.variational_layers {
                    for &learning_rate in &self.learning_rates {
                        out.push(GridPoint {
                            qubits,
                            encoding_layers,
                            variational_layers,
                            learning_rate,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub drug: String,
    pub expression: PathBuf,
    pub response: PathBuf,
    /// Sidecar file; when absent the default column names are used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Pre-made split plan to reproduce a run exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_plan: Option<PathBuf>,
}

impl DatasetEntry {
    pub fn load(&self) -> Result<Dataset> {
        let mut schema = match &self.schema {
            Some(p) => ResponseSchema::load(p)?,
            None => ResponseSchema::new(self.drug.clone()),
        };
        schema.drug = self.drug.clone();
        load_dataset(&self.expression, &self.response, &schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 100,
            patience: 3,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn config(&self, learning_rate: f64, early_stopping: bool, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate,
            adam: self.adam,
            patience: early_stopping.then_some(self.patience),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            hidden1: DEFAULT_HIDDEN1,
            hidden2: DEFAULT_HIDDEN2,
        }
    }
}

fn default_a() -> f64 {
    DEFAULT_A
}
fn default_r() -> f64 {
    DEFAULT_R
}
fn default_a_values() -> Vec<f64> {
    SWEEP_A.to_vec()
}
fn default_r_values() -> Vec<f64> {
    SWEEP_R.to_vec()
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_one() -> usize {
    1
}
fn default_point() -> GridPoint {
    GridPoint {
        qubits: 4,
        encoding_layers: 2,
        variational_layers: 1,
        learning_rate: 1e-4,
    }
}

/// Everything needed to reproduce an experiment. Relative paths are
/// resolved against the plan file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub name: String,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default)]
    pub grid: Grid,
    /// `a` of the proposed normalization.
    #[serde(default = "default_a")]
    pub a: f64,
    /// `r` of the proposed normalization.
    #[serde(default = "default_r", deserialize_with = "crate::angle::deserialize")]
    pub r: f64,
    #[serde(default = "default_a_values")]
    pub a_values: Vec<f64>,
    #[serde(default = "default_r_values", deserialize_with = "crate::angle::deserialize_vec")]
    pub r_values: Vec<f64>,
    /// Methods run by `compare`.
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Hyperparameters per method when no grid-search result is available.
    #[serde(default)]
    pub method_points: BTreeMap<Method, GridPoint>,
    /// Fallback hyperparameters for every method.
    #[serde(default = "default_point")]
    pub default_point: GridPoint,
    #[serde(default)]
    pub preprocessing: PrepareConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub encoder: EncoderSettings,
    /// Independent seeded repetitions of each test evaluation.
    #[serde(default = "default_one")]
    pub test_repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentPlan {
    /// A plan with the published defaults for one dataset.
    pub fn new(datasets: Vec<DatasetEntry>) -> Self {
        Self {
            name: String::new(),
            datasets,
            grid: Grid::default(),
            a: DEFAULT_A,
            r: DEFAULT_R,
            a_values: default_a_values(),
            r_values: default_r_values(),
            methods: default_methods(),
            method_points: BTreeMap::new(),
            default_point: default_point(),
            preprocessing: PrepareConfig::default(),
            train: TrainSettings::default(),
            encoder: EncoderSettings::default(),
            test_repeats: 1,
            seed: 0,
            workers: None,
            out: default_out(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan: ExperimentPlan = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        plan.resolve_paths(base);
        plan.validate()?;
        Ok(plan)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            fix(&mut d.expression);
            fix(&mut d.response);
            if let Some(s) = &mut d.schema {
                fix(s);
            }
            if let Some(s) = &mut d.split_plan {
                fix(s);
            }
        }
        fix(&mut self.out);
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("plan lists no datasets".into()));
        }
        if self.grid.points().is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        NormalizationSpec::gradual_tanh(self.a, self.r).validate()?;
        if self.test_repeats == 0 {
            return Err(Error::Config("test_repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig {
            seed: self.seed,
            ..self.preprocessing
        }
    }

    pub fn hidden(&self) -> (usize, usize) {
        (self.encoder.hidden1, self.encoder.hidden2)
    }

    /// Restrict to one drug.
    pub fn select_drug(&mut self, drug: &str) -> Result<()> {
        self.datasets.retain(|d| d.drug.eq_ignore_ascii_case(drug));
        if self.datasets.is_empty() {
            return Err(Error::Config(format!("plan has no dataset for drug {drug:?}")));
        }
        Ok(())
    }

    /// Content hash of everything that affects results. Worker count and
    /// output location are excluded.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.workers = None;
        canon.out = PathBuf::new();
        sha256_hex(serde_json::to_string(&canon).unwrap_or_default().as_bytes())
    }
}
