//! Normalizations applied between the classical encoder and the circuit's
//! rotation angles, plus the response-label transform.
//!
//! The scaled tanh `r·tanh(φ/a)` maps the real line into `(−r, r)`. With a
//! large `a` its slope near zero is `r/a`, small enough that typical encoder
//! outputs are not pushed against ±r; keeping `r ≤ π` keeps angles inside one
//! period of the rotation gates.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormalizationSpec {
    Identity,
    /// Per-sample standardization over the embedding with a learnable affine.
    LayerNorm,
    /// `(π/2)·tanh(φ)`
    Tanh,
    /// `r·tanh(φ/a)`
    GradualTanh {
        a: f64,
        #[serde(deserialize_with = "crate::angle::deserialize")]
        r: f64,
    },
}

/// Derivative of a normalization at one embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub enum NormGrad {
    Diagonal(Vec<f64>),
    Full(Array2<f64>),
}

impl NormalizationSpec {
    pub fn gradual_tanh(a: f64, r: f64) -> Self {
        NormalizationSpec::GradualTanh { a, r }
    }

    pub fn validate(&self) -> Result<()> {
        if let NormalizationSpec::GradualTanh { a, r } = *self {
            if !(a.is_finite() && a > 0.0 && r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!(
                    "gradual tanh needs a > 0 and r > 0, got a={a}, r={r}"
                )));
            }
        }
        Ok(())
    }

    /// Output bound, if the normalization has one.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            NormalizationSpec::Tanh => Some(FRAC_PI_2),
            NormalizationSpec::GradualTanh { r, .. } => Some(r),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NormalizationSpec::Identity => "identity".into(),
            NormalizationSpec::LayerNorm => "layernorm".into(),
            NormalizationSpec::Tanh => "tanh".into(),
            NormalizationSpec::GradualTanh { a, r } => format!("gradual_tanh(a={a},r={r})"),
        }
    }

    /// Normalize one embedding vector. LayerNorm uses the identity affine
    /// here; the model applies its learned affine through [`LayerNorm`].
    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        check_finite(phi)?;
        Ok(match *self {
            NormalizationSpec::Identity => phi.to_vec(),
            NormalizationSpec::LayerNorm => {
                let ones = vec![1.0; phi.len()];
                let zeros = vec![0.0; phi.len()];
                LayerNorm::forward(phi, &ones, &zeros)?.output
            }
            NormalizationSpec::Tanh => phi.iter().map(|&x| scaled_tanh(x, 1.0, FRAC_PI_2)).collect(),
            NormalizationSpec::GradualTanh { a, r } => {
                phi.iter().map(|&x| scaled_tanh(x, a, r)).collect()
            }
        })
    }

    /// Derivative at `phi`; LayerNorm returns its full Jacobian (identity affine).
    pub fn derivative(&self, phi: &[f64]) -> Result<NormGrad> {
        check_finite(phi)?;
        Ok(match *self {
            NormalizationSpec::Identity => NormGrad::Diagonal(vec![1.0; phi.len()]),
            NormalizationSpec::Tanh => {
                NormGrad::Diagonal(phi.iter().map(|&x| scaled_tanh_grad(x, 1.0, FRAC_PI_2)).collect())
            }
            NormalizationSpec::GradualTanh { a, r } => {
                NormGrad::Diagonal(phi.iter().map(|&x| scaled_tanh_grad(x, a, r)).collect())
            }
            NormalizationSpec::LayerNorm => {
                NormGrad::Full(LayerNorm::jacobian(phi, &vec![1.0; phi.len()])?)
            }
        })
    }

    /// Elementwise form used inside the model; `None` for LayerNorm.
    pub(crate) fn elementwise(&self) -> Option<(f64, f64)> {
        match *self {
            NormalizationSpec::Identity => None,
            NormalizationSpec::LayerNorm => None,
            NormalizationSpec::Tanh => Some((1.0, FRAC_PI_2)),
            NormalizationSpec::GradualTanh { a, r } => Some((a, r)),
        }
    }
}

fn check_finite(phi: &[f64]) -> Result<()> {
    match phi.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Data(format!("non-finite embedding value at index {i}"))),
        None => Ok(()),
    }
}

/// `r·tanh(x/a)`, kept strictly inside `(−r, r)` where tanh rounds to ±1.
#[inline]
pub fn scaled_tanh(x: f64, a: f64, r: f64) -> f64 {
    let y = r * (x / a).tanh();
    if y.abs() >= r {
        r.next_down().copysign(y)
    } else {
        y
    }
}

/// `(r/a)·sech²(x/a)`
#[inline]
pub fn scaled_tanh_grad(x: f64, a: f64, r: f64) -> f64 {
    let c = (x / a).cosh();
    r / a / (c * c)
}

/// Layer normalization over one embedding vector.
pub struct LayerNorm;

/// Forward results kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormOutput {
    pub output: Vec<f64>,
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

impl LayerNorm {
    pub fn forward(phi: &[f64], gamma: &[f64], beta: &[f64]) -> Result<LayerNormOutput> {
        let d = phi.len();
        if d < 2 {
            return Err(Error::Shape("layer norm needs at least 2 features".into()));
        }
        if gamma.len() != d || beta.len() != d {
            return Err(Error::Shape("layer norm affine length mismatch".into()));
        }
        let n = d as f64;
        let mean = phi.iter().sum::<f64>() / n;
        let var = phi.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let normalized: Vec<f64> = phi.iter().map(|x| (x - mean) * inv_std).collect();
        let output = normalized
            .iter()
            .zip(gamma.iter().zip(beta))
            .map(|(xh, (g, b))| g * xh + b)
            .collect();
        Ok(LayerNormOutput {
            output,
            normalized,
            inv_std,
        })
    }

    /// Vector-Jacobian product. Returns `(d_phi, d_gamma, d_beta)`.
    pub fn backward(
        fwd: &LayerNormOutput,
        gamma: &[f64],
        d_out: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = d_out.len() as f64;
        let d_beta = d_out.to_vec();
        let d_gamma: Vec<f64> = d_out.iter().zip(&fwd.normalized).map(|(g, x)| g * x).collect();
        let d_xhat: Vec<f64> = d_out.iter().zip(gamma).map(|(g, w)| g * w).collect();
        let sum: f64 = d_xhat.iter().sum();
        let dot: f64 = d_xhat.iter().zip(&fwd.normalized).map(|(g, x)| g * x).sum();
        let d_phi = d_xhat
            .iter()
            .zip(&fwd.normalized)
            .map(|(g, x)| fwd.inv_std * (g - sum / n - x * dot / n))
            .collect();
        (d_phi, d_gamma, d_beta)
    }

    /// `J[i][j] = ∂out_i/∂phi_j`.
    pub fn jacobian(phi: &[f64], gamma: &[f64]) -> Result<Array2<f64>> {
        let beta = vec![0.0; phi.len()];
        let fwd = Self::forward(phi, gamma, &beta)?;
        let d = phi.len();
        let n = d as f64;
        let mut jac = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[[i, j]] = gamma[i]
                    * fwd.inv_std
                    * (delta - 1.0 / n - fwd.normalized[i] * fwd.normalized[j] / n);
            }
        }
        Ok(jac)
    }
}

/// Maps log(IC50) to `tanh((x − mean)/std)` using training-set statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNormalizer {
    pub mean: f64,
    pub std: f64,
}

impl LabelNormalizer {
    /// Population mean and standard deviation of the training labels.
    pub fn fit(train_log_ic50: &[f64]) -> Result<Self> {
        if train_log_ic50.len() < 2 {
            return Err(Error::Degenerate("need at least 2 training labels".into()));
        }
        check_finite(train_log_ic50)?;
        let n = train_log_ic50.len() as f64;
        let mean = train_log_ic50.iter().sum::<f64>() / n;
        let var = train_log_ic50.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= 0.0 || !std.is_finite() {
            return Err(Error::Degenerate("training labels are constant".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn transform_one(&self, log_ic50: f64) -> f64 {
        ((log_ic50 - self.mean) / self.std).tanh()
    }

    pub fn transform(&self, log_ic50: &[f64]) -> Vec<f64> {
        log_ic50.iter().map(|&x| self.transform_one(x)).collect()
    }
}
