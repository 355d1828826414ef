use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Interface, ModelConfig};
use crate::normalization::NormalizationSpec;
use crate::sim::MeasurementHead;

/// Coarse grouping used by diagnostics (which parts of the model moved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Interface,
    Circuit,
    Head,
}

/// Offsets of every tensor inside the flat parameter vector. The order is
/// fixed: encoder layers, layer-norm affine, circuit angles, head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub bn1_gamma: Range<usize>,
    pub bn1_beta: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub bn2_gamma: Range<usize>,
    pub bn2_beta: Range<usize>,
    pub w3: Range<usize>,
    pub b3: Range<usize>,
    pub ln_gamma: Option<Range<usize>>,
    pub ln_beta: Option<Range<usize>>,
    pub thetas: Option<Range<usize>>,
    pub head_w: Option<Range<usize>>,
    pub head_b: Option<Range<usize>>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let e = &config.encoder;
        let mut c = Cursor(0);
        let w1 = c.take(e.hidden1 * e.input_dim);
        let b1 = c.take(e.hidden1);
        let bn1_gamma = c.take(e.hidden1);
        let bn1_beta = c.take(e.hidden1);
        let w2 = c.take(e.hidden2 * e.hidden1);
        let b2 = c.take(e.hidden2);
        let bn2_gamma = c.take(e.hidden2);
        let bn2_beta = c.take(e.hidden2);
        let w3 = c.take(e.output_dim * e.hidden2);
        let b3 = c.take(e.output_dim);

        let (mut ln_gamma, mut ln_beta, mut thetas, mut head_w, mut head_b) =
            (None, None, None, None, None);
        match config.interface {
            Interface::Classic => {
                head_w = Some(c.take(e.output_dim));
                head_b = Some(c.take(1));
            }
            Interface::Quantum {
                normalization,
                circuit,
            } => {
                if normalization == NormalizationSpec::LayerNorm {
                    ln_gamma = Some(c.take(e.output_dim));
                    ln_beta = Some(c.take(e.output_dim));
                }
                thetas = Some(c.take(circuit.n_params()));
                if circuit.head == MeasurementHead::Multi {
                    head_w = Some(c.take(circuit.qubits));
                    head_b = Some(c.take(1));
                }
            }
        }

        Self {
            w1,
            b1,
            bn1_gamma,
            bn1_beta,
            w2,
            b2,
            bn2_gamma,
            bn2_beta,
            w3,
            b3,
            ln_gamma,
            ln_beta,
            thetas,
            head_w,
            head_b,
            total: c.0,
        }
    }

    /// Closed-form trainable parameter count.
    pub fn expected_count(config: &ModelConfig) -> usize {
        let e = &config.encoder;
        let encoder = e.input_dim * e.hidden1
            + 3 * e.hidden1
            + e.hidden1 * e.hidden2
            + 3 * e.hidden2
            + e.hidden2 * e.output_dim
            + e.output_dim;
        let rest = match config.interface {
            Interface::Classic => e.output_dim + 1,
            Interface::Quantum {
                normalization,
                circuit,
            } => {
                let ln = if normalization == NormalizationSpec::LayerNorm {
                    2 * e.output_dim
                } else {
                    0
                };
                let head = match circuit.head {
                    MeasurementHead::Multi => circuit.qubits + 1,
                    MeasurementHead::Single => 0,
                };
                ln + circuit.n_params() + head
            }
        };
        encoder + rest
    }

    pub fn groups(&self) -> Vec<(ParamGroup, Range<usize>)> {
        let mut out = vec![(ParamGroup::Encoder, 0..self.b3.end)];
        if let (Some(g), Some(b)) = (&self.ln_gamma, &self.ln_beta) {
            out.push((ParamGroup::Interface, g.start..b.end));
        }
        if let Some(t) = &self.thetas {
            out.push((ParamGroup::Circuit, t.clone()));
        }
        if let (Some(w), Some(b)) = (&self.head_w, &self.head_b) {
            out.push((ParamGroup::Head, w.start..b.end));
        }
        out
    }
}
