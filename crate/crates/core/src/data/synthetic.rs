//! Teacher-generated datasets with a known, learnable response signal.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::load::{Dataset, ExpressionMatrix, LoadReport, ResponseRecord, ResponseSchema, ResponseTable};
use crate::error::Result;
use crate::io::{csv_bytes, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub samples: usize,
    pub genes: usize,
    /// Leading genes that drive the response.
    pub informative: usize,
    /// Share of the remaining genes given variance 0.04, below the usual
    /// 0.1 filter threshold.
    pub low_variance_fraction: f64,
    /// Standard deviation of additive label noise.
    pub noise: f64,
    /// Share of samples (lowest log(IC50)) labeled responders.
    pub responder_fraction: f64,
    pub seed: u64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        Self {
            samples: 500,
            genes: 50,
            informative: 8,
            low_variance_fraction: 0.25,
            noise: 0.3,
            responder_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Linear teacher: `log(IC50) = w·x_informative / √k + noise`.
pub fn teacher_dataset(drug: &str, spec: &TeacherSpec) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let informative = spec.informative.min(spec.genes);
    let n_low = ((spec.genes - informative) as f64 * spec.low_variance_fraction).round() as usize;

    let weights: Vec<f64> = (0..informative)
        .map(|_| {
            let w: f64 = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                w
            } else {
                -w
            }
        })
        .collect();

    let values = Array2::from_shape_fn((spec.samples, spec.genes), |(_, g)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if g >= spec.genes - n_low {
            0.2 * z
        } else {
            z
        }
    });

    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("valid noise");
    let scale = (informative.max(1) as f64).sqrt();
    let log_ic50: Vec<f64> = values
        .rows()
        .into_iter()
        .map(|row| {
            let signal: f64 = weights.iter().zip(row.iter()).map(|(w, x)| w * x).sum();
            signal / scale + noise.sample(&mut rng)
        })
        .collect();

    let mut sorted = log_ic50.clone();
    sorted.sort_by(f64::total_cmp);
    let n_resp = ((spec.samples as f64 * spec.responder_fraction).round() as usize)
        .clamp(1, spec.samples.saturating_sub(1).max(1));
    let cutoff = sorted[n_resp - 1];

    let samples: Vec<String> = (0..spec.samples).map(|i| format!("S{i:04}")).collect();
    let records = samples
        .iter()
        .zip(&log_ic50)
        .map(|(s, &y)| ResponseRecord {
            sample: s.clone(),
            log_ic50: y,
            responder: y <= cutoff,
        })
        .collect();

    Dataset {
        drug: drug.to_string(),
        expression: ExpressionMatrix {
            samples,
            genes: (0..spec.genes).map(|g| format!("G{g:03}")).collect(),
            values,
        },
        responses: ResponseTable { records },
        report: LoadReport::default(),
    }
}

/// Paths written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct WrittenDataset {
    pub expression: PathBuf,
    pub response: PathBuf,
    pub schema: PathBuf,
}

/// Write the dataset as `<drug>_expression.csv` (samples as rows),
/// `<drug>_response.csv` and a `<drug>_schema.json` sidecar.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<WrittenDataset> {
    let stem = dataset.drug.to_lowercase();
    let expression = dir.join(format!("{stem}_expression.csv"));
    let response = dir.join(format!("{stem}_response.csv"));
    let schema = dir.join(format!("{stem}_schema.json"));

    let e = &dataset.expression;
    let mut header = vec!["sample_id"];
    header.extend(e.genes.iter().map(String::as_str));
    let rows = e.samples.iter().zip(e.values.rows()).map(|(s, row)| {
        std::iter::once(s.clone()).chain(row.iter().map(|v| v.to_string())).collect::<Vec<_>>()
    });
    write_atomic(&expression, &csv_bytes(&header, rows)?)?;

    let rows = dataset.responses.records.iter().map(|r| {
        [
            r.sample.clone(),
            r.log_ic50.to_string(),
            if r.responder { "R" } else { "NR" }.to_string(),
        ]
    });
    write_atomic(&response, &csv_bytes(&["sample_name", "logIC50", "response"], rows)?)?;

    let sidecar = ResponseSchema::new(dataset.drug.clone());
    write_atomic(&schema, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok(WrittenDataset {
        expression,
        response,
        schema,
    })
}
