mod common;

use common::*;
use hdlcnn_core::clustering::FeatureOrdering;
use hdlcnn_core::explainer::{
    deep_shap, deeplift_attribute, exact_shapley, global_importance, linear_shap, root_cause, Aggregation,
    ExplainError, Explanation, GlobalImportance, SUMMATION_TOLERANCE,
};
use hdlcnn_core::model::{HdlcnnModel, ModelConfig};
use hdlcnn_core::numerics::Tensor;
use proptest::prelude::*;
use rand::Rng;

const P: usize = 14;
const T: usize = 10;

fn row_players() -> Vec<Vec<usize>> {
    (0..P).map(|f| (f * T..(f + 1) * T).collect()).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Randomly initialised relu model with nonzero biases.
fn relu_model(seed: u64, p: usize, t: usize, classes: usize) -> HdlcnnModel {
    let cfg = ModelConfig {
        seed,
        ..ModelConfig::new(p, t, classes, p / 2)
    };
    let mut model = HdlcnnModel::build(cfg, FeatureOrdering::identity(p, p / 2).unwrap()).unwrap();
    let mut r = rng(seed + 1000);
    let params = model.params_mut();
    for b in [&mut params.segment1_bias, &mut params.segment2_bias, &mut params.conv2_bias, &mut params.head_bias] {
        b.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
    }
    mark_trained(model)
}

#[test]
fn oracle_chain_on_affine_networks() {
    for seed in 0..3 {
        let model = linear_network(seed);
        let mut r = rng(seed + 50);
        let x = random_tensor(&[1, P, T], &mut r, 0.0, 1.0);
        let reference = random_tensor(&[1, P, T], &mut r, 0.0, 1.0);
        for target in 0..3 {
            let f = logit_fn(&model, target);
            let (beta, b0) = affine_coefficients(&f, P * T);
            let lin = linear_shap(&beta, b0, x.data(), reference.data()).unwrap();
            let dl = deeplift_attribute(&model, &x, &reference, target).unwrap();
            assert!(max_diff(&lin, dl.contributions.data()) <= 1e-8, "cell-wise, seed {seed}");

            let exact = exact_shapley(&f, x.data(), reference.data(), &row_players()).unwrap();
            let lin_rows: Vec<f64> = lin.chunks(T).map(|c| c.iter().sum()).collect();
            assert!(max_diff(&exact, &lin_rows) <= 1e-8);
            assert!(max_diff(&exact, &dl.feature_sums()) <= 1e-8);
        }
    }
}

#[test]
fn deep_shap_on_affine_network_uses_the_background_mean() {
    let model = linear_network(7);
    let mut r = rng(8);
    let background: Vec<Tensor> = (0..25).map(|_| random_tensor(&[1, P, T], &mut r, 0.0, 1.0)).collect();
    let mut mean = Tensor::zeros(&[1, P, T]);
    for b in &background {
        mean.data_mut().iter_mut().zip(b.data()).for_each(|(m, v)| *m += v / 25.0);
    }
    let x = random_tensor(&[1, P, T], &mut r, 0.0, 1.0);
    let ds = deep_shap(&model, &x, &background, 1).unwrap();
    let exact = exact_shapley(logit_fn(&model, 1), x.data(), mean.data(), &row_players()).unwrap();
    assert!(max_diff(&ds.feature_sums(), &exact) <= 1e-8);
}

#[test]
fn untouched_rows_get_no_attribution() {
    let mut model = relu_model(3, P, T, 3);
    // kernel row 0 is the only tap that reaches input rows 0 and 1
    let w = &mut model.params_mut().segment1_weight;
    let [co, ci, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    for o in 0..co * ci {
        for n in 0..kw {
            w.data_mut()[o * kh * kw + n] = 0.0;
        }
    }
    let mut r = rng(9);
    for _ in 0..5 {
        let x = random_tensor(&[1, P, T], &mut r, 0.0, 1.0);
        let reference = random_tensor(&[1, P, T], &mut r, 0.0, 1.0);
        let e = deeplift_attribute(&model, &x, &reference, 2).unwrap();
        assert!(e.contributions.data()[..2 * T].iter().all(|&c| c == 0.0));
        assert!(e.contributions.data()[2 * T..].iter().any(|&c| c != 0.0));
    }
}

#[test]
fn symmetric_players_share_equally() {
    let game = |z: &[f64]| z[0] * z[1] + (z[0] + z[1]).sin() + 3.0 * z[2] * z[3];
    let phi = exact_shapley(game, &[1.5, 1.5, 0.7, -2.0], &[0.2, 0.2, 0.0, 0.0], &[vec![0], vec![1], vec![2], vec![3]]).unwrap();
    assert!((phi[0] - phi[1]).abs() <= 1e-10);
    let total = game(&[1.5, 1.5, 0.7, -2.0]) - game(&[0.2, 0.2, 0.0, 0.0]);
    assert!((phi.iter().sum::<f64>() - total).abs() <= 1e-12);
}

#[test]
fn contributions_sum_to_the_output_change() {
    let mut r = rng(10);
    let mut checked = 0;
    for seed in 0..5 {
        let model = relu_model(seed, 22, 20, 11);
        let background: Vec<Tensor> = (0..3).map(|_| random_tensor(&[1, 22, 20], &mut r, 0.0, 1.0)).collect();
        for _ in 0..20 {
            let x = random_tensor(&[1, 22, 20], &mut r, 0.0, 1.0);
            let target = r.random_range(0..11);
            let e = deep_shap(&model, &x, &background, target).unwrap();
            let delta = e.sample_output - e.reference_output;
            assert!((e.contributions.sum() - delta).abs() <= SUMMATION_TOLERANCE);
            let logit = model.sample_logits(&x).unwrap().data()[target];
            assert_eq!(e.sample_output, logit);
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
}

#[test]
fn misuse_is_reported() {
    let untrained = HdlcnnModel::build(ModelConfig::new(P, T, 3, 7), FeatureOrdering::identity(P, 7).unwrap()).unwrap();
    let x = Tensor::zeros(&[1, P, T]);
    assert!(matches!(deeplift_attribute(&untrained, &x, &x, 0), Err(ExplainError::Untrained)));
    let model = mark_trained(untrained);
    assert!(matches!(deeplift_attribute(&model, &x, &x, 3), Err(ExplainError::Target { .. })));
    assert!(matches!(deep_shap(&model, &x, &[], 0), Err(ExplainError::EmptyBackground)));
    assert!(deeplift_attribute(&model, &Tensor::zeros(&[1, P, T + 1]), &x, 0).is_err());
    let bad = Explanation::new(0, 0, Tensor::filled(&[2, 2], 1.0), 0.0, 1.0);
    assert!(matches!(bad, Err(ExplainError::Summation { .. })));
}

#[test]
fn restored_order_matches_original_features() {
    let ordering = FeatureOrdering {
        permutation: vec![2, 0, 3, 1],
        boundary: 2,
    };
    let c = Tensor::new(vec![4, 1], vec![20.0, 0.0, 30.0, 10.0]).unwrap();
    let e = Explanation::new(0, 0, c, 0.0, 60.0).unwrap();
    assert_eq!(e.restore_feature_order(&ordering).unwrap().feature_sums(), vec![0.0, 10.0, 20.0, 30.0]);
}

proptest! {
    #[test]
    fn root_cause_ignores_positive_scaling(phi in prop::collection::vec(-5.0f64..5.0, 2..20), scale in 1e-3f64..1e3) {
        let gi = GlobalImportance { phi: phi.clone(), n_samples_used: 1, aggregation: Aggregation::MeanAbs };
        let scaled = GlobalImportance { phi: phi.iter().map(|v| v * scale).collect(), ..gi.clone() };
        prop_assert_eq!(root_cause(&gi).feature, root_cause(&scaled).feature);
    }

    #[test]
    fn mean_abs_bounds_signed_mean(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..6)) {
        let exps: Vec<Explanation> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let c = Tensor::new(vec![4, 1], r.clone()).unwrap();
                Explanation::new(i, 1, c, 0.0, r.iter().sum()).unwrap()
            })
            .collect();
        let signed = global_importance(&exps, Aggregation::SignedMean).unwrap();
        let abs = global_importance(&exps, Aggregation::MeanAbs).unwrap();
        for (s, a) in signed.phi.iter().zip(&abs.phi) {
            prop_assert!(s.abs() <= a + 1e-12);
        }
    }
}
