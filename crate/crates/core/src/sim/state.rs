use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the simulator will allocate (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

// Registers at or above this size split gate kernels across threads.
#[cfg(feature = "parallel")]
const PARALLEL_KERNEL_QUBITS: usize = 16;

/// Single-qubit gates used by the encoding circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    H,
    RZ(f64),
    RX(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `n_qubits` qubits.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count {n_qubits} outside supported range 1..={MAX_QUBITS}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Build a state from raw amplitudes. The length must be a power of two;
    /// normalization is the caller's responsibility.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Shape(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("{n_qubits} qubits exceeds {MAX_QUBITS}")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Reset to |0…0⟩ without reallocating.
    pub fn reset(&mut self) {
        self.amps.fill(Complex64::new(0.0, 0.0));
        self.amps[0] = Complex64::new(1.0, 0.0);
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: qubit,
                len: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: Gate, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        match gate {
            Gate::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_pairs(qubit, |a, b| ((a + b) * s, (a - b) * s));
            }
            Gate::RZ(lambda) => {
                let (sin, cos) = (lambda / 2.0).sin_cos();
                let lo = Complex64::new(cos, -sin);
                let hi = Complex64::new(cos, sin);
                self.apply_pairs(qubit, |a, b| (a * lo, b * hi));
            }
            Gate::RX(lambda) => {
                let (sin, cos) = (lambda / 2.0).sin_cos();
                let msin = Complex64::new(0.0, -sin);
                self.apply_pairs(qubit, |a, b| (a * cos + b * msin, a * msin + b * cos));
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Argument(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        // Visit each swapped pair once: control set, target clear.
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    /// Exact ⟨Z⟩ on `qubit`.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            if i & mask == 0 {
                acc += a.norm_sqr();
            } else {
                acc -= a.norm_sqr();
            }
        }
        Ok(acc)
    }

    /// Apply `f` to every amplitude pair (|…0_q…⟩, |…1_q…⟩).
    fn apply_pairs<F>(&mut self, qubit: usize, f: F)
    where
        F: Fn(Complex64, Complex64) -> (Complex64, Complex64) + Sync,
    {
        let stride = 1usize << qubit;
        let block = stride << 1;

        #[cfg(feature = "parallel")]
        if self.n_qubits >= PARALLEL_KERNEL_QUBITS {
            use rayon::prelude::*;
            // Large strides leave few blocks; split each block's halves instead.
            if stride >= 1 << 12 {
                self.amps.par_chunks_mut(block).for_each(|chunk| {
                    let (lo, hi) = chunk.split_at_mut(stride);
                    lo.par_iter_mut()
                        .zip(hi.par_iter_mut())
                        .for_each(|(a, b)| (*a, *b) = f(*a, *b));
                });
            } else {
                self.amps.par_chunks_mut(block).for_each(|chunk| {
                    let (lo, hi) = chunk.split_at_mut(stride);
                    for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                        (*a, *b) = f(*a, *b);
                    }
                });
            }
            return;
        }

        for chunk in self.amps.chunks_exact_mut(block) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                (*a, *b) = f(*a, *b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn init_is_ground_state() {
        assert_eq!(StateVector::new(1).unwrap().amplitudes(), &[c(1., 0.), c(0., 0.)]);
        assert_eq!(
            StateVector::new(2).unwrap().amplitudes(),
            &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]
        );
        let s = StateVector::new(8).unwrap();
        assert_eq!(s.amplitudes().len(), 256);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qubit_guard() {
        assert!(matches!(StateVector::new(0), Err(Error::Config(_))));
        assert!(matches!(StateVector::new(25), Err(Error::Config(_))));
    }

    #[test]
    fn rx_pi_flips() {
        let mut s = StateVector::new(1).unwrap();
        s.apply(Gate::RX(PI), 0).unwrap();
        assert!(close(s.amplitudes()[0], c(0., 0.)));
        assert!(close(s.amplitudes()[1], c(0., -1.)));
        assert!((s.expectation_z(0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rz_keeps_z() {
        for k in 0..20 {
            let mut s = StateVector::new(1).unwrap();
            s.apply(Gate::RZ(k as f64 * 0.7 - 5.0), 0).unwrap();
            assert!((s.expectation_z(0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rx_half_pi_is_balanced() {
        let mut s = StateVector::new(1).unwrap();
        s.apply(Gate::RX(FRAC_PI_2), 0).unwrap();
        assert!(s.expectation_z(0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cnot_truth_table() {
        // |10⟩ in ket order q1 q0 means qubit 1 set: index 2. Control 1, target 0.
        let mut s = StateVector::from_amplitudes(vec![c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])
            .unwrap();
        s.apply_cnot(1, 0).unwrap();
        assert_eq!(s.amplitudes()[3], c(1., 0.));

        let mut s = StateVector::new(2).unwrap();
        s.apply_cnot(1, 0).unwrap();
        assert_eq!(s.amplitudes()[0], c(1., 0.));
    }

    #[test]
    fn cnot_makes_bell_state() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s =
            StateVector::from_amplitudes(vec![c(h, 0.), c(0., 0.), c(h, 0.), c(0., 0.)]).unwrap();
        s.apply_cnot(1, 0).unwrap();
        let a = s.amplitudes();
        assert!(close(a[0], c(h, 0.)) && close(a[3], c(h, 0.)));
        assert!(close(a[1], c(0., 0.)) && close(a[2], c(0., 0.)));
    }

    #[test]
    fn argument_errors() {
        let mut s = StateVector::new(2).unwrap();
        assert!(matches!(s.apply(Gate::H, 2), Err(Error::QubitIndex { .. })));
        assert!(matches!(s.apply_cnot(1, 1), Err(Error::Argument(_))));
        assert!(matches!(s.expectation_z(5), Err(Error::QubitIndex { .. })));
    }
}
