use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchMoments, BatchNormCache};
use super::layout::ParamLayout;
use super::{Interface, ModelConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::normalization::{scaled_tanh, scaled_tanh_grad, LayerNorm, LayerNormOutput};
use crate::sim::{CircuitPlan, Jacobian};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// Batch-norm running statistics (not trained by the optimizer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean1: Vec<f64>,
    pub var1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub var2: Vec<f64>,
}

impl RunningStats {
    fn fresh(hidden1: usize, hidden2: usize) -> Self {
        Self {
            mean1: vec![0.0; hidden1],
            var1: vec![1.0; hidden1],
            mean2: vec![0.0; hidden2],
            var2: vec![1.0; hidden2],
        }
    }
}

/// Encoder outputs before and after the interface normalization.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
}

/// Everything a training-mode forward pass keeps for the backward pass.
pub struct TrainForward {
    pub predictions: Vec<f64>,
    y1: Array2<f64>,
    a1: Array2<f64>,
    bn1: BatchNormCache,
    moments1: BatchMoments,
    y2: Array2<f64>,
    a2: Array2<f64>,
    bn2: BatchNormCache,
    moments2: BatchMoments,
    phi: Array2<f64>,
    layer_norm: Vec<LayerNormOutput>,
    jacobians: Vec<Jacobian>,
}

struct EncoderPass {
    y1: Array2<f64>,
    a1: Array2<f64>,
    y2: Array2<f64>,
    a2: Array2<f64>,
    phi: Array2<f64>,
    train: Option<[(BatchNormCache, BatchMoments); 2]>,
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<f64>,
    stats: RunningStats,
    plan: Option<CircuitPlan>,
    exec: Exec,
}

impl HybridModel {
    /// Fresh model with seeded initialization: Kaiming-uniform encoder
    /// weights, circuit angles uniform in [−π, π], small uniform head.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = config.encoder;

        let mut fill = |params: &mut [f64], bound: f64| {
            for p in params {
                *p = rng.random_range(-bound..=bound);
            }
        };
        let kaiming = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let bias = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();

        fill(&mut params[layout.w1.clone()], kaiming(e.input_dim));
        fill(&mut params[layout.b1.clone()], bias(e.input_dim));
        fill(&mut params[layout.w2.clone()], kaiming(e.hidden1));
        fill(&mut params[layout.b2.clone()], bias(e.hidden1));
        fill(&mut params[layout.w3.clone()], kaiming(e.hidden2));
        fill(&mut params[layout.b3.clone()], bias(e.hidden2));
        if let Some(t) = &layout.thetas {
            fill(&mut params[t.clone()], PI);
        }
        if let (Some(w), Some(b)) = (&layout.head_w, &layout.head_b) {
            let fan_in = w.len();
            fill(&mut params[w.clone()], bias(fan_in));
            fill(&mut params[b.clone()], bias(fan_in));
        }
        for r in [&layout.bn1_gamma, &layout.bn2_gamma] {
            params[r.clone()].fill(1.0);
        }
        if let Some(g) = &layout.ln_gamma {
            params[g.clone()].fill(1.0);
        }

        Self::from_parts(config, params, RunningStats::fresh(e.hidden1, e.hidden2))
    }

    pub fn from_parts(config: ModelConfig, params: Vec<f64>, stats: RunningStats) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        let e = config.encoder;
        if stats.mean1.len() != e.hidden1
            || stats.var1.len() != e.hidden1
            || stats.mean2.len() != e.hidden2
            || stats.var2.len() != e.hidden2
        {
            return Err(Error::Shape("running statistics do not match the encoder".into()));
        }
        let plan = match config.interface {
            Interface::Quantum { circuit, .. } => Some(CircuitPlan::build(circuit)?),
            Interface::Classic => None,
        };
        Ok(Self {
            config,
            layout,
            params,
            stats,
            plan,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    pub fn plan(&self) -> Option<&CircuitPlan> {
        self.plan.as_ref()
    }

    fn v1(&self, r: &std::ops::Range<usize>) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[r.clone()])
    }

    fn v2(&self, r: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[r.clone()]).expect("layout matches")
    }

    fn check_input(&self, x: ArrayView2<f64>, mode: Mode) -> Result<()> {
        if x.ncols() != self.config.encoder.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} genes, got {}",
                self.config.encoder.input_dim,
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if mode == Mode::Train && x.nrows() < 2 {
            return Err(Error::BatchSize(x.nrows()));
        }
        Ok(())
    }

    fn encode(&self, x: ArrayView2<f64>, mode: Mode) -> Result<EncoderPass> {
        self.check_input(x, mode)?;
        let e = self.config.encoder;
        let l = &self.layout;

        let z1 = layers::linear(x, self.v2(&l.w1, e.hidden1, e.input_dim), self.v1(&l.b1));
        let (y1, c1) = self.norm_layer(z1.view(), mode, &l.bn1_gamma, &l.bn1_beta, 1);
        let a1 = y1.mapv(layers::silu);

        let z2 = layers::linear(a1.view(), self.v2(&l.w2, e.hidden2, e.hidden1), self.v1(&l.b2));
        let (y2, c2) = self.norm_layer(z2.view(), mode, &l.bn2_gamma, &l.bn2_beta, 2);
        let a2 = y2.mapv(layers::silu);

        let phi = layers::linear(a2.view(), self.v2(&l.w3, e.output_dim, e.hidden2), self.v1(&l.b3));
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("encoder produced non-finite embeddings".into()));
        }
        Ok(EncoderPass {
            y1,
            a1,
            y2,
            a2,
            phi,
            train: match (c1, c2) {
                (Some(c1), Some(c2)) => Some([c1, c2]),
                _ => None,
            },
        })
    }

    fn norm_layer(
        &self,
        z: ArrayView2<f64>,
        mode: Mode,
        gamma: &std::ops::Range<usize>,
        beta: &std::ops::Range<usize>,
        which: u8,
    ) -> (Array2<f64>, Option<(BatchNormCache, BatchMoments)>) {
        match mode {
            Mode::Train => {
                let (y, cache, m) = layers::batch_norm_train(z, self.v1(gamma), self.v1(beta));
                (y, Some((cache, m)))
            }
            Mode::Eval => {
                let (rm, rv) = if which == 1 {
                    (&self.stats.mean1, &self.stats.var1)
                } else {
                    (&self.stats.mean2, &self.stats.var2)
                };
                let y = layers::batch_norm_eval(
                    z,
                    self.v1(gamma),
                    self.v1(beta),
                    ArrayView1::from(rm),
                    ArrayView1::from(rv),
                );
                (y, None)
            }
        }
    }

    /// Encoder output `batch × embedding_dim`. Training mode updates the
    /// running statistics.
    pub fn encoder_forward(&mut self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let pass = self.encode(x, mode)?;
        if let Some([(_, m1), (_, m2)]) = &pass.train {
            self.absorb_moments(m1, m2);
        }
        Ok(pass.phi)
    }

    fn absorb_moments(&mut self, m1: &BatchMoments, m2: &BatchMoments) {
        m1.update_running(&mut self.stats.mean1, &mut self.stats.var1);
        m2.update_running(&mut self.stats.mean2, &mut self.stats.var2);
    }

    /// Normalize one embedding row. Returns the angles and, for layer norm,
    /// the cache needed by the backward pass.
    fn normalize_row(&self, phi: ArrayView1<f64>) -> (Vec<f64>, Option<LayerNormOutput>) {
        let Interface::Quantum { normalization, .. } = self.config.interface else {
            return (phi.to_vec(), None);
        };
        if let Some((a, r)) = normalization.elementwise() {
            return (phi.iter().map(|&x| scaled_tanh(x, a, r)).collect(), None);
        }
        match (&self.layout.ln_gamma, &self.layout.ln_beta) {
            (Some(g), Some(b)) => {
                let row = phi.to_vec();
                let out = LayerNorm::forward(&row, &self.params[g.clone()], &self.params[b.clone()])
                    .expect("layout validated");
                (out.output.clone(), Some(out))
            }
            _ => (phi.to_vec(), None),
        }
    }

    fn normalize_batch(&self, phi: &Array2<f64>) -> (Array2<f64>, Vec<LayerNormOutput>) {
        let mut angles = Array2::zeros(phi.raw_dim());
        let mut caches = Vec::new();
        for (i, row) in phi.rows().into_iter().enumerate() {
            let (a, cache) = self.normalize_row(row);
            angles.row_mut(i).assign(&Array1::from(a));
            caches.extend(cache);
        }
        (angles, caches)
    }

    /// Raw and normalized embeddings in evaluation mode.
    pub fn embeddings(&self, x: ArrayView2<f64>) -> Result<Embeddings> {
        let pass = self.encode(x, Mode::Eval)?;
        let (normalized, _) = self.normalize_batch(&pass.phi);
        Ok(Embeddings {
            raw: pass.phi,
            normalized,
        })
    }

    fn thetas(&self) -> &[f64] {
        self.layout
            .thetas
            .as_ref()
            .map_or(&[][..], |r| &self.params[r.clone()])
    }

    fn head_output(&self, values: &[f64]) -> f64 {
        match (&self.layout.head_w, &self.layout.head_b) {
            (Some(w), Some(b)) => {
                let w = &self.params[w.clone()];
                w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() + self.params[b.start]
            }
            _ => values[0],
        }
    }

    /// Predictions in evaluation mode.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let pass = self.encode(x, Mode::Eval)?;
        self.finish(&pass.phi)
    }

    fn finish(&self, phi: &Array2<f64>) -> Result<Vec<f64>> {
        match &self.plan {
            None => Ok(phi.rows().into_iter().map(|r| self.head_output(&r.to_vec())).collect()),
            Some(plan) => {
                let (angles, _) = self.normalize_batch(phi);
                let thetas = self.thetas();
                let outs = self.exec.map_range(angles.nrows(), |i| {
                    let row = angles.row(i).to_vec();
                    plan.forward(&row, thetas)
                });
                outs.into_iter()
                    .map(|o| o.map(|v| self.head_output(&v)))
                    .collect()
            }
        }
    }

    /// Forward pass that, in training mode, also updates running statistics.
    pub fn forward(&mut self, x: ArrayView2<f64>, mode: Mode) -> Result<Vec<f64>> {
        match mode {
            Mode::Eval => self.predict(x),
            Mode::Train => {
                let fwd = self.forward_train(x)?;
                self.apply_batch_stats(&fwd);
                Ok(fwd.predictions)
            }
        }
    }

    /// Training-mode forward pass with no side effects.
    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<TrainForward> {
        let pass = self.encode(x, Mode::Train)?;
        let [(bn1, moments1), (bn2, moments2)] = pass.train.expect("train mode");
        let (predictions, layer_norm, jacobians) = match &self.plan {
            None => {
                let p = pass
                    .phi
                    .rows()
                    .into_iter()
                    .map(|r| self.head_output(&r.to_vec()))
                    .collect();
                (p, Vec::new(), Vec::new())
            }
            Some(plan) => {
                let (angles, ln) = self.normalize_batch(&pass.phi);
                let thetas = self.thetas();
                let jacs = self
                    .exec
                    .map_range(angles.nrows(), |i| plan.jacobian(&angles.row(i).to_vec(), thetas))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                let p = jacs.iter().map(|j| self.head_output(&j.values)).collect();
                (p, ln, jacs)
            }
        };
        Ok(TrainForward {
            predictions,
            y1: pass.y1,
            a1: pass.a1,
            bn1,
            moments1,
            y2: pass.y2,
            a2: pass.a2,
            bn2,
            moments2,
            phi: pass.phi,
            layer_norm,
            jacobians,
        })
    }

    pub fn apply_batch_stats(&mut self, fwd: &TrainForward) {
        self.absorb_moments(&fwd.moments1, &fwd.moments2);
    }

    /// Reverse pass: gradient of `Σ_i d_pred[i] · prediction_i` with respect
    /// to every trainable parameter, in layout order.
    pub fn backward(&self, x: ArrayView2<f64>, fwd: &TrainForward, d_pred: &[f64]) -> Vec<f64> {
        let e = self.config.encoder;
        let l = &self.layout;
        let n = d_pred.len();
        let mut grads = vec![0.0; l.total];

        // Head and interface, per sample; produces dL/dphi.
        let mut d_phi = Array2::<f64>::zeros((n, e.output_dim));
        match (&self.plan, self.config.interface) {
            (None, _) => {
                let (w, b) = (l.head_w.clone().unwrap(), l.head_b.clone().unwrap());
                let weights = &self.params[w.clone()];
                for (i, &g) in d_pred.iter().enumerate() {
                    let row = fwd.phi.row(i);
                    for (k, v) in row.iter().enumerate() {
                        grads[w.start + k] += g * v;
                        d_phi[[i, k]] = g * weights[k];
                    }
                    grads[b.start] += g;
                }
            }
            (Some(plan), Interface::Quantum { normalization, .. }) => {
                let n_out = plan.n_outputs();
                let mut d_values = vec![0.0; n_out];
                let theta_range = l.thetas.clone().unwrap();
                for (i, &g) in d_pred.iter().enumerate() {
                    let jac = &fwd.jacobians[i];
                    match (&l.head_w, &l.head_b) {
                        (Some(w), Some(b)) => {
                            let weights = &self.params[w.clone()];
                            for o in 0..n_out {
                                grads[w.start + o] += g * jac.values[o];
                                d_values[o] = g * weights[o];
                            }
                            grads[b.start] += g;
                        }
                        _ => d_values[0] = g,
                    }
                    // Vector-Jacobian products through the circuit.
                    let dv = ArrayView1::from(&d_values);
                    let d_angles = jac.inputs.t().dot(&dv);
                    let d_thetas = jac.params.t().dot(&dv);
                    for (k, v) in d_thetas.iter().enumerate() {
                        grads[theta_range.start + k] += v;
                    }
                    let phi_row = fwd.phi.row(i);
                    let mut out_row = d_phi.row_mut(i);
                    if let Some((a, r)) = normalization.elementwise() {
                        for k in 0..e.output_dim {
                            out_row[k] = d_angles[k] * scaled_tanh_grad(phi_row[k], a, r);
                        }
                    } else if let (Some(gr), Some(br)) = (&l.ln_gamma, &l.ln_beta) {
                        let (dp, dg, db) = LayerNorm::backward(
                            &fwd.layer_norm[i],
                            &self.params[gr.clone()],
                            d_angles.as_slice().unwrap(),
                        );
                        for k in 0..e.output_dim {
                            out_row[k] = dp[k];
                            grads[gr.start + k] += dg[k];
                            grads[br.start + k] += db[k];
                        }
                    } else {
                        out_row.assign(&d_angles);
                    }
                }
            }
            (Some(_), Interface::Classic) => unreachable!("classic models have no circuit"),
        }

        // Encoder, layer by layer.
        let write = |grads: &mut [f64], r: &std::ops::Range<usize>, src: &mut dyn Iterator<Item = f64>| {
            for (g, v) in grads[r.clone()].iter_mut().zip(src) {
                *g = v;
            }
        };

        let (dw3, db3, da2) =
            layers::linear_backward(fwd.a2.view(), self.v2(&l.w3, e.output_dim, e.hidden2), d_phi.view(), true);
        write(&mut grads, &l.w3, &mut dw3.iter().copied());
        write(&mut grads, &l.b3, &mut db3.iter().copied());

        let dy2 = da2.unwrap() * &fwd.y2.mapv(layers::silu_grad);
        let (dz2, dg2, dbe2) = layers::batch_norm_backward(&fwd.bn2, self.v1(&l.bn2_gamma), dy2.view());
        write(&mut grads, &l.bn2_gamma, &mut dg2.iter().copied());
        write(&mut grads, &l.bn2_beta, &mut dbe2.iter().copied());

        let (dw2, db2, da1) =
            layers::linear_backward(fwd.a1.view(), self.v2(&l.w2, e.hidden2, e.hidden1), dz2.view(), true);
        write(&mut grads, &l.w2, &mut dw2.iter().copied());
        write(&mut grads, &l.b2, &mut db2.iter().copied());

        let dy1 = da1.unwrap() * &fwd.y1.mapv(layers::silu_grad);
        let (dz1, dg1, dbe1) = layers::batch_norm_backward(&fwd.bn1, self.v1(&l.bn1_gamma), dy1.view());
        write(&mut grads, &l.bn1_gamma, &mut dg1.iter().copied());
        write(&mut grads, &l.bn1_beta, &mut dbe1.iter().copied());

        let (dw1, db1, _) =
            layers::linear_backward(x, self.v2(&l.w1, e.hidden1, e.input_dim), dz1.view(), false);
        write(&mut grads, &l.w1, &mut dw1.iter().copied());
        write(&mut grads, &l.b1, &mut db1.iter().copied());

        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalization::NormalizationSpec;
    use crate::sim::{CircuitConfig, MeasurementHead};
    use std::f64::consts::FRAC_PI_2;

    fn toy(head: MeasurementHead, norm: NormalizationSpec) -> HybridModel {
        let cfg = ModelConfig::quantum(4, CircuitConfig::new(2, 1, 1, head), norm).with_hidden(6, 5);
        HybridModel::new(cfg, 7).unwrap()
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut m = toy(MeasurementHead::Multi, NormalizationSpec::Identity);
        m.params_mut().fill(0.0);
        let x = batch(3, 4, 1);
        let phi = m.encoder_forward(x.view(), Mode::Eval).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
        let phi = m.encoder_forward(x.view(), Mode::Train).unwrap();
        assert!(phi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_is_deterministic_and_train_differs() {
        let m = toy(MeasurementHead::Multi, NormalizationSpec::gradual_tanh(20.0, FRAC_PI_2));
        let x = batch(8, 4, 2);
        let a = m.predict(x.view()).unwrap();
        let b = m.predict(x.view()).unwrap();
        assert_eq!(a, b);
        let t = m.forward_train(x.view()).unwrap().predictions;
        assert!(a.iter().zip(&t).any(|(p, q)| (p - q).abs() > 1e-9));
    }

    #[test]
    fn single_sample_train_batch_rejected() {
        let mut m = toy(MeasurementHead::Single, NormalizationSpec::Tanh);
        let x = batch(1, 4, 3);
        assert!(matches!(m.forward(x.view(), Mode::Train), Err(Error::BatchSize(1))));
        assert!(m.forward(x.view(), Mode::Eval).is_ok());
    }

    #[test]
    fn single_head_predictions_bounded() {
        let m = toy(MeasurementHead::Single, NormalizationSpec::Identity);
        let x = batch(32, 4, 4) * 10.0;
        assert!(m.predict(x.view()).unwrap().iter().all(|p| p.abs() <= 1.0));
    }

    #[test]
    fn zero_encoder_predicts_zero_angle_circuit() {
        // With a silent encoder the angles are all zero, so every ⟨Z⟩ is zero
        // and the multi head returns its bias.
        let mut m = toy(MeasurementHead::Multi, NormalizationSpec::gradual_tanh(1e6, FRAC_PI_2));
        let l = m.layout().clone();
        m.params_mut()[..l.b3.end].fill(0.0);
        let bias = m.params()[l.head_b.clone().unwrap().start];
        let p = m.predict(batch(4, 4, 5).view()).unwrap();
        assert!(p.iter().all(|v| (v - bias).abs() < 1e-12));
    }

    #[test]
    fn wrong_gene_count() {
        let m = toy(MeasurementHead::Multi, NormalizationSpec::Identity);
        assert!(matches!(m.predict(batch(3, 5, 0).view()), Err(Error::Shape(_))));
    }

    #[test]
    fn config_mismatch_rejected() {
        let mut cfg = ModelConfig::quantum(
            4,
            CircuitConfig::new(2, 2, 1, MeasurementHead::Multi),
            NormalizationSpec::Identity,
        );
        cfg.encoder.output_dim = 3;
        assert!(matches!(HybridModel::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn classic_param_count() {
        let cfg = ModelConfig::classic(10, 8);
        let m = HybridModel::new(cfg, 0).unwrap();
        assert_eq!(m.params().len(), ParamLayout::expected_count(&cfg));
    }
}
