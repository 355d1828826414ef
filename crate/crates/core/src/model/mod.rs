//! The hybrid model: MLP encoder → interface normalization → circuit → head,
//! and the all-classical baseline that swaps the quantum part for one linear
//! layer.

mod checkpoint;
mod hybrid;
pub mod layers;
mod layout;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use hybrid::{Embeddings, HybridModel, Mode, RunningStats, TrainForward};
pub use layers::{silu, silu_grad};
pub use layout::{ParamGroup, ParamLayout};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalization::NormalizationSpec;
use crate::sim::{CircuitConfig, MeasurementHead};

pub const DEFAULT_HIDDEN1: usize = 512;
pub const DEFAULT_HIDDEN2: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub output_dim: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden1: DEFAULT_HIDDEN1,
            hidden2: DEFAULT_HIDDEN2,
            output_dim,
        }
    }

    pub fn with_hidden(mut self, hidden1: usize, hidden2: usize) -> Self {
        self.hidden1 = hidden1;
        self.hidden2 = hidden2;
        self
    }
}

/// What sits on top of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interface {
    /// One linear layer, no normalization and no circuit.
    Classic,
    Quantum {
        normalization: NormalizationSpec,
        circuit: CircuitConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub interface: Interface,
}

impl ModelConfig {
    pub fn quantum(
        input_dim: usize,
        circuit: CircuitConfig,
        normalization: NormalizationSpec,
    ) -> Self {
        Self {
            encoder: EncoderConfig::new(input_dim, circuit.n_inputs()),
            interface: Interface::Quantum {
                normalization,
                circuit,
            },
        }
    }

    pub fn classic(input_dim: usize, embedding_dim: usize) -> Self {
        Self {
            encoder: EncoderConfig::new(input_dim, embedding_dim),
            interface: Interface::Classic,
        }
    }

    pub fn with_hidden(mut self, hidden1: usize, hidden2: usize) -> Self {
        self.encoder = self.encoder.with_hidden(hidden1, hidden2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.input_dim == 0 || e.hidden1 == 0 || e.hidden2 == 0 || e.output_dim == 0 {
            return Err(Error::Config(format!("encoder dimensions must be positive: {e:?}")));
        }
        if let Interface::Quantum {
            normalization,
            circuit,
        } = &self.interface
        {
            circuit.validate()?;
            normalization.validate()?;
            if e.output_dim != circuit.n_inputs() {
                return Err(Error::Config(format!(
                    "encoder emits {} features but the circuit has {} input slots",
                    e.output_dim,
                    circuit.n_inputs()
                )));
            }
            if *normalization == NormalizationSpec::LayerNorm && e.output_dim < 2 {
                return Err(Error::Config("layer norm needs an embedding of size >= 2".into()));
            }
        }
        Ok(())
    }

    pub fn head(&self) -> Option<MeasurementHead> {
        match self.interface {
            Interface::Quantum { circuit, .. } => Some(circuit.head),
            Interface::Classic => None,
        }
    }

    pub fn normalization(&self) -> Option<NormalizationSpec> {
        match self.interface {
            Interface::Quantum { normalization, .. } => Some(normalization),
            Interface::Classic => None,
        }
    }
}
