//! Noiseless dense statevector simulation of the layered encoding circuit.
//!
//! Basis states are indexed little-endian: qubit 0 is the least significant
//! bit of the amplitude index.

mod circuit;
mod state;

pub use circuit::{
    CircuitConfig, CircuitPlan, Jacobian, MeasurementHead, Op, OpKind, Slot,
};
pub use state::{Gate, StateVector, MAX_QUBITS};
