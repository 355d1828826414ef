#![allow(dead_code)]

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qhybrid::model::{HybridModel, ModelConfig};
use qhybrid::normalization::NormalizationSpec;
use qhybrid::sim::{CircuitConfig, MeasurementHead};
use qhybrid::train::mse_loss;

pub type C = Complex64;

/// Dense `2^n × 2^n` operators with qubit 0 as the least significant bit.
pub struct Dense {
    pub n: usize,
    pub m: Array2<C>,
}

impl Dense {
    pub fn identity(n: usize) -> Self {
        Dense {
            n,
            m: Array2::from_diag_elem(1 << n, C::new(1.0, 0.0)),
        }
    }

    pub fn single(n: usize, q: usize, g: [[C; 2]; 2]) -> Self {
        let d = 1 << n;
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                if (i ^ j) & !(1 << q) == 0 {
                    m[[i, j]] = g[(i >> q) & 1][(j >> q) & 1];
                }
            }
        }
        Dense { n, m }
    }

    pub fn cnot(n: usize, c: usize, t: usize) -> Self {
        let d = 1 << n;
        let mut m = Array2::zeros((d, d));
        for j in 0..d {
            let i = if (j >> c) & 1 == 1 { j ^ (1 << t) } else { j };
            m[[i, j]] = C::new(1.0, 0.0);
        }
        Dense { n, m }
    }

    /// `self` followed by `next`.
    pub fn then(self, next: Dense) -> Dense {
        Dense {
            n: self.n,
            m: next.m.dot(&self.m),
        }
    }

    pub fn apply_to_zero(&self) -> Vec<C> {
        self.m.column(0).to_vec()
    }
}

pub fn h() -> [[C; 2]; 2] {
    let s = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[s, s], [s, -s]]
}

pub fn rz(l: f64) -> [[C; 2]; 2] {
    let z = C::new(0.0, 0.0);
    [[C::from_polar(1.0, -l / 2.0), z], [z, C::from_polar(1.0, l / 2.0)]]
}

pub fn rx(t: f64) -> [[C; 2]; 2] {
    let c = C::new((t / 2.0).cos(), 0.0);
    let s = C::new(0.0, -(t / 2.0).sin());
    [[c, s], [s, c]]
}

pub fn z_expectation(amps: &[C], q: usize) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(i, a)| if (i >> q) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// Brute-force circuit: stacked encoding repetitions, then variational
/// repetitions, then the measurement head, as full matrix products.
pub fn oracle_forward(cfg: &CircuitConfig, inputs: &[f64], params: &[f64]) -> Vec<f64> {
    let n = cfg.qubits;
    let mut u = Dense::identity(n);
    for j in 0..cfg.encoding_layers {
        if j == 0 {
            for q in 0..n {
                u = u.then(Dense::single(n, q, h()));
            }
        }
        for q in 0..n {
            u = u.then(Dense::single(n, q, rz(inputs[j * n + q])));
        }
    }
    for k in 0..cfg.variational_layers {
        for q in 0..n {
            u = u.then(Dense::single(n, q, rx(params[k * n + q])));
        }
        if n > 1 {
            for q in 0..n {
                u = u.then(Dense::cnot(n, q, (q + 1) % n));
            }
        }
    }
    let measured: Vec<usize> = match cfg.head {
        MeasurementHead::Multi => (0..n).collect(),
        MeasurementHead::Single => {
            for q in (1..n).rev() {
                u = u.then(Dense::cnot(n, q, q - 1));
            }
            vec![0]
        }
    };
    let amps = u.apply_to_zero();
    measured.iter().map(|&q| z_expectation(&amps, q)).collect()
}

/// `|a − b| ≤ rel·max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

/// Gradient comparisons: relative 1e-5 with a 1e-8 floor for values near zero.
pub fn grad_close(a: f64, b: f64) -> bool {
    close(a, b, 1e-5, 1e-8)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_batch(seed: u64, rows: usize, genes: usize) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, genes), |_| rng.random_range(-2.0..2.0));
    let y = uniform(&mut rng, rows, -0.9, 0.9);
    (x, y)
}

/// Small quantum model used by the gradient and training checks.
pub fn toy_model(
    genes: usize,
    qubits: usize,
    enc: usize,
    var: usize,
    head: MeasurementHead,
    norm: NormalizationSpec,
    seed: u64,
) -> HybridModel {
    // Layer norm is undefined on a single feature.
    let enc = if norm == NormalizationSpec::LayerNorm && qubits * enc < 2 { 2 } else { enc };
    let cfg = ModelConfig::quantum(genes, CircuitConfig::new(qubits, enc, var, head), norm)
        .with_hidden(6, 5);
    HybridModel::new(cfg, seed).expect("valid toy model")
}

/// Training-mode MSE of the batch for the given parameters.
pub fn batch_loss(model: &HybridModel, params: &[f64], x: &Array2<f64>, y: &[f64]) -> f64 {
    let mut m = model.clone();
    m.params_mut().copy_from_slice(params);
    let fwd = m.forward_train(x.view()).expect("forward");
    mse_loss(&fwd.predictions, y).expect("loss").0
}

/// Central differences of `batch_loss` in every parameter.
pub fn fd_gradient(model: &HybridModel, x: &Array2<f64>, y: &[f64], eps: f64) -> Vec<f64> {
    let base = model.params().to_vec();
    let mut p = base.clone();
    (0..base.len())
        .map(|i| {
            p[i] = base[i] + eps;
            let up = batch_loss(model, &p, x, y);
            p[i] = base[i] - eps;
            let down = batch_loss(model, &p, x, y);
            p[i] = base[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Reverse-mode gradient of `batch_loss`.
pub fn analytic_gradient(model: &HybridModel, x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let fwd = model.forward_train(x.view()).expect("forward");
    let (_, d) = mse_loss(&fwd.predictions, y).expect("loss");
    model.backward(x.view(), &fwd, &d)
}
