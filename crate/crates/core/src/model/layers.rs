//! Dense building blocks of the encoder with hand-written backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x·sigmoid(x)`
#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `x·Wᵀ + b` for a row-major batch `x` and `W` of shape `(out, in)`.
pub fn linear(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w.t());
    y += &b;
    y
}

/// Gradients of [`linear`]: `(dW, db, dx)`. `dx` is skipped when not needed.
pub fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    need_dx: bool,
) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
    let dw = dy.t().dot(&x);
    let db = dy.sum_axis(Axis(0));
    let dx = need_dx.then(|| dy.dot(&w));
    (dw, db, dx)
}

/// Batch statistics from one training-mode batch-norm call.
#[derive(Debug, Clone)]
pub struct BatchMoments {
    pub mean: Array1<f64>,
    /// Biased (divide-by-N) variance, used for normalization.
    pub var: Array1<f64>,
    pub n: usize,
}

impl BatchMoments {
    /// Blend into running statistics. The running variance tracks the
    /// unbiased estimate.
    pub fn update_running(&self, running_mean: &mut [f64], running_var: &mut [f64]) {
        let m = BATCH_NORM_MOMENTUM;
        let unbias = self.n as f64 / (self.n as f64 - 1.0);
        for (rm, bm) in running_mean.iter_mut().zip(self.mean.iter()) {
            *rm = (1.0 - m) * *rm + m * bm;
        }
        for (rv, bv) in running_var.iter_mut().zip(self.var.iter()) {
            *rv = (1.0 - m) * *rv + m * bv * unbias;
        }
    }
}

pub struct BatchNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Training-mode batch norm over the batch axis.
pub fn batch_norm_train(
    z: ArrayView2<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> (Array2<f64>, BatchNormCache, BatchMoments) {
    let n = z.nrows();
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = &z - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n as f64;
    let inv_std = var.mapv(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt());
    let normalized = centered * &inv_std;
    let y = &normalized * &gamma + beta;
    (
        y,
        BatchNormCache {
            normalized,
            inv_std,
        },
        BatchMoments { mean, var, n },
    )
}

pub fn batch_norm_eval(
    z: ArrayView2<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running_mean: ArrayView1<f64>,
    running_var: ArrayView1<f64>,
) -> Array2<f64> {
    let scale = Array1::from_iter(
        running_var
            .iter()
            .zip(gamma.iter())
            .map(|(v, g)| g / (v + BATCH_NORM_EPS).sqrt()),
    );
    (&z - &running_mean) * &scale + beta
}

/// Returns `(dz, dgamma, dbeta)`.
pub fn batch_norm_backward(
    cache: &BatchNormCache,
    gamma: ArrayView1<f64>,
    dy: ArrayView2<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = dy.nrows() as f64;
    let dbeta = dy.sum_axis(Axis(0));
    let dgamma = (&dy * &cache.normalized).sum_axis(Axis(0));
    let dxhat = &dy * &gamma;
    let sum = dxhat.sum_axis(Axis(0));
    let dot = (&dxhat * &cache.normalized).sum_axis(Axis(0));
    let dz = (dxhat * n - &sum - &cache.normalized * &dot) * &(&cache.inv_std / n);
    (dz, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((silu(40.0) - 40.0).abs() < 1e-12);
        assert!(silu(-40.0).abs() < 1e-12);
    }

    #[test]
    fn silu_grad_matches_fd() {
        let h = 1e-6;
        for i in -50..=50 {
            let x = i as f64 * 0.17;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn batch_norm_train_standardizes() {
        let z = array![[1.0, 10.0], [3.0, 10.0], [5.0, 16.0]];
        let g = array![1.0, 1.0];
        let b = array![0.0, 0.0];
        let (y, _, m) = batch_norm_train(z.view(), g.view(), b.view());
        assert_eq!(m.mean, array![3.0, 12.0]);
        for col in y.columns() {
            assert!(col.sum().abs() < 1e-12);
            let var = col.mapv(|v| v * v).sum() / 3.0;
            assert!((var - 1.0).abs() < 1e-4);
        }
        let mut rm = vec![0.0, 0.0];
        let mut rv = vec![1.0, 1.0];
        m.update_running(&mut rm, &mut rv);
        assert!((rm[0] - 0.3).abs() < 1e-12);
        // batch var of column 0 is 8/3, unbiased 4.
        assert!((rv[0] - (0.9 + 0.4)).abs() < 1e-12);
    }
}
