mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use common::{analytic_gradient, fd_gradient, grad_close, random_batch, toy_model};
use qhybrid::model::{HybridModel, ModelConfig, ParamGroup};
use qhybrid::normalization::{scaled_tanh, scaled_tanh_grad, LayerNorm, NormGrad, NormalizationSpec};
use qhybrid::sim::MeasurementHead;

fn norm() -> impl Strategy<Value = NormalizationSpec> {
    prop_oneof![
        Just(NormalizationSpec::Identity),
        Just(NormalizationSpec::LayerNorm),
        Just(NormalizationSpec::Tanh),
        (0.5f64..50.0, 0.2f64..PI).prop_map(|(a, r)| NormalizationSpec::gradual_tanh(a, r)),
    ]
}

fn head() -> impl Strategy<Value = MeasurementHead> {
    prop_oneof![Just(MeasurementHead::Multi), Just(MeasurementHead::Single)]
}

fn assert_grads(model: &HybridModel, seed: u64, rows: usize) -> Result<(), TestCaseError> {
    let genes = model.config().encoder.input_dim;
    let (x, y) = random_batch(seed, rows, genes);
    let g = analytic_gradient(model, &x, &y);
    let fd = fd_gradient(model, &x, &y, 1e-6);
    for (i, (a, b)) in g.iter().zip(&fd).enumerate() {
        prop_assert!(grad_close(*a, *b), "param {}: analytic {} vs fd {}", i, a, b);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reverse_mode_matches_finite_differences(
        genes in 2usize..=8,
        qubits in 1usize..=4,
        enc in 1usize..=2,
        var in 1usize..=2,
        head in head(),
        norm in norm(),
        seed in any::<u64>(),
        rows in 2usize..=5,
    ) {
        let model = toy_model(genes, qubits, enc, var, head, norm, seed);
        assert_grads(&model, seed ^ 1, rows)?;
    }

    #[test]
    fn gradual_tanh_is_bounded_and_monotone(a in 0.01f64..1e3, r in 0.01f64..30.0, x in -1e6f64..1e6, dx in 1e-6f64..10.0) {
        let y = scaled_tanh(x, a, r);
        prop_assert!(y.abs() < r);
        prop_assert!(scaled_tanh(x + dx, a, r) >= y);
        prop_assert!(scaled_tanh_grad(x, a, r) >= 0.0);
        prop_assert!(scaled_tanh_grad(x, a, r) <= r / a * (1.0 + 1e-15));
    }

    #[test]
    fn bounded_r_keeps_angles_unaliased(a in 0.01f64..1e3, r in 0.01f64..=PI, x in prop::num::f64::NORMAL) {
        prop_assert!(scaled_tanh(x, a, r).abs() < PI);
    }

    #[test]
    fn layer_norm_jacobian_matches_finite_differences(
        phi in prop::collection::vec(-3.0f64..3.0, 2..8),
        seed in any::<u64>(),
    ) {
        let n = phi.len();
        let gamma: Vec<f64> = (0..n).map(|i| 0.5 + ((seed >> i) & 7) as f64 / 4.0).collect();
        let beta = vec![0.1; n];
        let jac = LayerNorm::jacobian(&phi, &gamma).unwrap();
        let eps = 1e-6;
        for j in 0..n {
            let (mut up, mut dn) = (phi.clone(), phi.clone());
            up[j] += eps;
            dn[j] -= eps;
            let fu = LayerNorm::forward(&up, &gamma, &beta).unwrap().output;
            let fd = LayerNorm::forward(&dn, &gamma, &beta).unwrap().output;
            for i in 0..n {
                let d = (fu[i] - fd[i]) / (2.0 * eps);
                prop_assert!((jac[[i, j]] - d).abs() < 1e-6 * (1.0 + d.abs()));
            }
        }
    }

    #[test]
    fn elementwise_derivatives_match_finite_differences(phi in prop::collection::vec(-40.0f64..40.0, 1..6), which in 0usize..3) {
        let spec = [
            NormalizationSpec::Identity,
            NormalizationSpec::Tanh,
            NormalizationSpec::gradual_tanh(20.0, FRAC_PI_2),
        ][which];
        let NormGrad::Diagonal(d) = spec.derivative(&phi).unwrap() else {
            panic!("elementwise spec gave a full Jacobian");
        };
        let eps = 1e-6;
        for i in 0..phi.len() {
            let (mut up, mut dn) = (phi.clone(), phi.clone());
            up[i] += eps;
            dn[i] -= eps;
            let fd = (spec.apply(&up).unwrap()[i] - spec.apply(&dn).unwrap()[i]) / (2.0 * eps);
            prop_assert!((d[i] - fd).abs() < 1e-8, "{} vs {}", d[i], fd);
        }
    }
}

#[test]
fn classic_gradient_matches_finite_differences() {
    let cfg = ModelConfig::classic(6, 8).with_hidden(7, 5);
    let model = HybridModel::new(cfg, 4).unwrap();
    let (x, y) = random_batch(5, 4, 6);
    let g = analytic_gradient(&model, &x, &y);
    let fd = fd_gradient(&model, &x, &y, 1e-6);
    for (a, b) in g.iter().zip(&fd) {
        assert!(grad_close(*a, *b), "{a} vs {b}");
    }
}

#[test]
fn every_parameter_group_receives_gradient() {
    let specs = [
        NormalizationSpec::Identity,
        NormalizationSpec::LayerNorm,
        NormalizationSpec::Tanh,
        NormalizationSpec::gradual_tanh(20.0, FRAC_PI_2),
    ];
    for (k, norm) in specs.into_iter().enumerate() {
        for head in [MeasurementHead::Multi, MeasurementHead::Single] {
            let model = toy_model(6, 3, 2, 2, head, norm, 100 + k as u64);
            let (x, y) = random_batch(7, 8, 6);
            let g = analytic_gradient(&model, &x, &y);
            let groups = model.layout().groups();
            let expected = 2
                + usize::from(norm == NormalizationSpec::LayerNorm)
                + usize::from(head == MeasurementHead::Multi);
            assert_eq!(groups.len(), expected, "{norm:?}");
            for (group, range) in groups {
                let l2: f64 = g[range].iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(l2 > 1e-12 && l2.is_finite(), "{norm:?}/{head:?}: {group:?} has gradient norm {l2}");
            }
        }
    }
}

#[test]
fn encoder_group_spans_all_layers() {
    let model = toy_model(4, 2, 1, 1, MeasurementHead::Multi, NormalizationSpec::Tanh, 1);
    let groups = model.layout().groups();
    let (g, r) = &groups[0];
    assert_eq!(*g, ParamGroup::Encoder);
    assert_eq!(r.start, 0);
    assert_eq!(groups.last().unwrap().1.end, model.params().len());
}
