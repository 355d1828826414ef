use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::state::{Gate, StateVector, MAX_QUBITS};
use crate::error::{Error, Result};

/// How the circuit's qubits are read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementHead {
    /// ⟨Z⟩ on every qubit; a classical linear layer combines them.
    Multi,
    /// CNOT chain folds every qubit into qubit 0, which is measured alone.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub qubits: usize,
    pub encoding_layers: usize,
    pub variational_layers: usize,
    pub head: MeasurementHead,
}

impl CircuitConfig {
    pub fn new(
        qubits: usize,
        encoding_layers: usize,
        variational_layers: usize,
        head: MeasurementHead,
    ) -> Self {
        Self {
            qubits,
            encoding_layers,
            variational_layers,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits == 0 || self.qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {} outside 1..={MAX_QUBITS}",
                self.qubits
            )));
        }
        if self.encoding_layers == 0 || self.variational_layers == 0 {
            return Err(Error::Config(
                "encoding and variational layer counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of input-angle slots (one RZ per qubit per encoding layer).
    pub fn n_inputs(&self) -> usize {
        self.qubits * self.encoding_layers
    }

    /// Number of trainable RX angles.
    pub fn n_params(&self) -> usize {
        self.qubits * self.variational_layers
    }

    pub fn n_outputs(&self) -> usize {
        match self.head {
            MeasurementHead::Multi => self.qubits,
            MeasurementHead::Single => 1,
        }
    }
}

/// Where a rotation gate takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Input(usize),
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpKind {
    H,
    RZ,
    RX,
    CNOT,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Op {
    pub gate: OpKind,
    /// Target qubit, or `[control, target]` for CNOT.
    pub qubits: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slot: Option<Slot>,
}

impl Op {
    fn fixed(gate: OpKind, qubit: usize) -> Self {
        Self {
            gate,
            qubits: vec![qubit],
            slot: None,
        }
    }

    fn rotation(gate: OpKind, qubit: usize, slot: Slot) -> Self {
        Self {
            gate,
            qubits: vec![qubit],
            slot: Some(slot),
        }
    }

    fn cnot(control: usize, target: usize) -> Self {
        Self {
            gate: OpKind::CNOT,
            qubits: vec![control, target],
            slot: None,
        }
    }
}

/// Ordered gate list with symbolic angle slots, plus the measured qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitPlan {
    pub config: CircuitConfig,
    pub ops: Vec<Op>,
    pub measured: Vec<usize>,
}

/// Outputs of one circuit evaluation together with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub values: Vec<f64>,
    /// `n_outputs × n_inputs`
    pub inputs: Array2<f64>,
    /// `n_outputs × n_params`
    pub params: Array2<f64>,
}

impl CircuitPlan {
    /// Lay out the encoding, variational and measurement blocks.
    ///
    /// Encoding: a Hadamard wall (first repetition only), then one RZ per
    /// qubit per repetition, each with its own input slot. Variational: an RX
    /// per qubit followed by a CNOT ring `i -> i+1 mod n` (no ring on one qubit).
    /// The single-measurement head appends CNOTs `i -> i-1` for `i = n-1..1`.
    pub fn build(config: CircuitConfig) -> Result<Self> {
        config.validate()?;
        let n = config.qubits;
        let mut ops = Vec::new();

        for layer in 0..config.encoding_layers {
            if layer == 0 {
                ops.extend((0..n).map(|q| Op::fixed(OpKind::H, q)));
            }
            ops.extend((0..n).map(|q| Op::rotation(OpKind::RZ, q, Slot::Input(layer * n + q))));
        }

        for layer in 0..config.variational_layers {
            ops.extend((0..n).map(|q| Op::rotation(OpKind::RX, q, Slot::Param(layer * n + q))));
            if n > 1 {
                ops.extend((0..n).map(|q| Op::cnot(q, (q + 1) % n)));
            }
        }

        let measured = match config.head {
            MeasurementHead::Multi => (0..n).collect(),
            MeasurementHead::Single => {
                ops.extend((1..n).rev().map(|q| Op::cnot(q, q - 1)));
                vec![0]
            }
        };

        Ok(Self {
            config,
            ops,
            measured,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.config.n_inputs()
    }

    pub fn n_params(&self) -> usize {
        self.config.n_params()
    }

    pub fn n_outputs(&self) -> usize {
        self.measured.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn check_lengths(&self, inputs: &[f64], params: &[f64]) -> Result<()> {
        if inputs.len() != self.n_inputs() || params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "circuit expects {} inputs and {} params, got {} and {}",
                self.n_inputs(),
                self.n_params(),
                inputs.len(),
                params.len()
            )));
        }
        Ok(())
    }

    fn angle(slot: Slot, inputs: &[f64], params: &[f64]) -> f64 {
        match slot {
            Slot::Input(i) => inputs[i],
            Slot::Param(i) => params[i],
        }
    }

    fn apply_op(state: &mut StateVector, op: &Op, angle: f64) {
        // Indices were validated when the plan was built.
        let q = op.qubits[0];
        let res = match op.gate {
            OpKind::H => state.apply(Gate::H, q),
            OpKind::RZ => state.apply(Gate::RZ(angle), q),
            OpKind::RX => state.apply(Gate::RX(angle), q),
            OpKind::CNOT => state.apply_cnot(q, op.qubits[1]),
        };
        debug_assert!(res.is_ok());
    }

    fn run_from(&self, state: &mut StateVector, start: usize, inputs: &[f64], params: &[f64]) {
        for op in &self.ops[start..] {
            let angle = op.slot.map_or(0.0, |s| Self::angle(s, inputs, params));
            Self::apply_op(state, op, angle);
        }
    }

    fn measure_into(&self, state: &StateVector, out: &mut [f64]) {
        for (o, &q) in out.iter_mut().zip(&self.measured) {
            *o = state.expectation_z(q).unwrap_or(f64::NAN);
        }
    }

    /// Exact expectation values for one input vector.
    pub fn forward(&self, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.check_lengths(inputs, params)?;
        let mut state = StateVector::new(self.config.qubits)?;
        self.run_from(&mut state, 0, inputs, params);
        let mut out = vec![0.0; self.n_outputs()];
        self.measure_into(&state, &mut out);
        Ok(out)
    }

    /// Outputs and their exact derivatives by the parameter-shift rule,
    /// `d/dλ f = [f(λ + π/2) − f(λ − π/2)] / 2`, for every angle slot.
    ///
    /// The state before each rotation is built once and reused for both
    /// shifted evaluations.
    pub fn jacobian(&self, inputs: &[f64], params: &[f64]) -> Result<Jacobian> {
        self.check_lengths(inputs, params)?;
        let n_out = self.n_outputs();
        let mut d_inputs = Array2::zeros((n_out, self.n_inputs()));
        let mut d_params = Array2::zeros((n_out, self.n_params()));

        let mut prefix = StateVector::new(self.config.qubits)?;
        let mut work = prefix.clone();
        let mut plus = vec![0.0; n_out];
        let mut minus = vec![0.0; n_out];

        for (k, op) in self.ops.iter().enumerate() {
            let angle = op.slot.map_or(0.0, |s| Self::angle(s, inputs, params));
            if let Some(slot) = op.slot {
                for (shift, out) in [(FRAC_PI_2, &mut plus), (-FRAC_PI_2, &mut minus)] {
                    work.clone_from(&prefix);
                    Self::apply_op(&mut work, op, angle + shift);
                    self.run_from(&mut work, k + 1, inputs, params);
                    self.measure_into(&work, out);
                }
                let mut column = match slot {
                    Slot::Input(i) => d_inputs.column_mut(i),
                    Slot::Param(i) => d_params.column_mut(i),
                };
                for (o, d) in column.iter_mut().enumerate() {
                    *d = 0.5 * (plus[o] - minus[o]);
                }
            }
            Self::apply_op(&mut prefix, op, angle);
        }

        let mut values = vec![0.0; n_out];
        self.measure_into(&prefix, &mut values);
        Ok(Jacobian {
            values,
            inputs: d_inputs,
            params: d_params,
        })
    }
}
