//! Embedding distributions of trained models.

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Prepared, SampleSet};
use crate::error::{Error, Result};
use crate::io::{csv_bytes, write_atomic};
use crate::model::HybridModel;

pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_BINS: usize = 20;
/// `|φ'|` above this share of the bound counts as crowded at the edge.
pub const CROWDING_LEVEL: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistBin> {
    let bins = bins.max(1);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistBin> = (0..bins)
        .map(|b| HistBin {
            lo: lo + b as f64 * width,
            hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        if !(lo..=hi).contains(&v) {
            continue;
        }
        let b = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        out[b].count += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

fn moments(v: &[f64]) -> Moments {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Moments {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub samples: usize,
    pub dims: usize,
    pub normalization: String,
    pub bound: Option<f64>,
    /// Share of normalized values with `|φ'| > 0.99·bound`.
    pub crowding: Option<f64>,
    pub raw: Moments,
    pub normalized: Moments,
    pub raw_histogram: Vec<HistBin>,
    pub normalized_histogram: Vec<HistBin>,
}

#[derive(Debug, Clone)]
pub struct Distribution {
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
    pub summary: DistributionSummary,
}

/// Raw and normalized embeddings of `x` in evaluation mode.
pub fn distribution(model: &HybridModel, x: ArrayView2<f64>, bins: usize) -> Result<Distribution> {
    let emb = model.embeddings(x)?;
    let raw: Vec<f64> = emb.raw.iter().copied().collect();
    let norm: Vec<f64> = emb.normalized.iter().copied().collect();
    let spec = model.config().normalization();
    let bound = spec.and_then(|s| s.bound());
    let crowding = bound.map(|b| {
        norm.iter().filter(|v| v.abs() > CROWDING_LEVEL * b).count() as f64 / norm.len().max(1) as f64
    });
    let rm = moments(&raw);
    let nm = moments(&norm);
    let (nlo, nhi) = bound.map_or((nm.min, nm.max), |b| (-b, b));
    let summary = DistributionSummary {
        samples: emb.raw.nrows(),
        dims: emb.raw.ncols(),
        normalization: spec.map_or_else(|| "none".into(), |s| s.label()),
        bound,
        crowding,
        raw: rm,
        normalized: nm,
        raw_histogram: histogram(&raw, rm.min, rm.max, bins),
        normalized_histogram: histogram(&norm, nlo, nhi, bins),
    };
    Ok(Distribution {
        raw: emb.raw,
        normalized: emb.normalized,
        summary,
    })
}

impl Distribution {
    pub fn values_csv(&self) -> Result<Vec<u8>> {
        let rows = self.raw.indexed_iter().map(|((s, d), v)| {
            vec![
                s.to_string(),
                d.to_string(),
                v.to_string(),
                self.normalized[[s, d]].to_string(),
            ]
        });
        csv_bytes(&["sample", "dim", "phi", "phi_normalized"], rows)
    }

    pub fn histogram_csv(&self) -> Result<Vec<u8>> {
        let s = &self.summary;
        let rows = [("raw", &s.raw_histogram), ("normalized", &s.normalized_histogram)]
            .into_iter()
            .flat_map(|(name, h)| {
                h.iter().map(move |b| {
                    vec![name.to_string(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()]
                })
            });
        csv_bytes(&["series", "bin_lo", "bin_hi", "count"], rows)
    }

    /// Write `<prefix>.csv`, `<prefix>_hist.csv` and `<prefix>.json`.
    pub fn write(&self, out: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        let files = [
            (format!("{prefix}.csv"), self.values_csv()?),
            (format!("{prefix}_hist.csv"), self.histogram_csv()?),
            (format!("{prefix}.json"), serde_json::to_vec_pretty(&self.summary)?),
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

/// `n` training-pool samples drawn without replacement, in pool order.
pub fn training_samples(prepared: &Prepared, n: usize, seed: u64) -> SampleSet {
    let pool = prepared.pool();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n.min(pool.len()));
    idx.sort_unstable();
    pool.select(&idx)
}

/// Confirms a checkpoint was trained on the same gene columns.
pub fn check_genes(expected: &[String], prepared: &Prepared) -> Result<()> {
    if expected != prepared.genes.as_slice() {
        return Err(Error::Config(format!(
            "checkpoint expects {} genes that differ from the {} selected for {}",
            expected.len(),
            prepared.genes.len(),
            prepared.drug
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 1.0, 2.0], 0.0, 1.0, 2);
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!(h[1].hi, 1.0);
    }

    #[test]
    fn degenerate_range() {
        let h = histogram(&[3.0, 3.0], 3.0, 3.0, 4);
        assert_eq!(h[0].count, 2);
    }
}
