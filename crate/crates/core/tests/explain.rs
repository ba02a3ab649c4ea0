mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resgcn_core::explain::{
    average_tp_cam, cam_level, class_activation_map, grad_cam_batch, max_normalized, neuron_importance, upsample_cam,
    ClassActivationMap,
};
use resgcn_core::mesh::upsample_to_finest;
use resgcn_core::nn::{Classifier, SampleSet};
use resgcn_core::testing::random_vec;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradcam_invariants_hold(seed: u64) {
        common::gradcam_invariants(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn importance_is_the_per_map_mean(seed: u64, nodes in 1usize..50, maps in 1usize..10) {
        let g = random_vec(&mut ChaCha8Rng::seed_from_u64(seed), nodes * maps);
        let alpha = neuron_importance(&g, maps).unwrap();
        for (k, a) in alpha.iter().enumerate() {
            let column: Vec<f64> = (0..nodes).map(|n| g[n * maps + k]).collect();
            let mean = column.iter().sum::<f64>() / nodes as f64;
            prop_assert!((a - mean).abs() <= 1e-15 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn single_unit_map_is_the_rectified_map(seed: u64, nodes in 1usize..50) {
        let a = random_vec(&mut ChaCha8Rng::seed_from_u64(seed), nodes);
        let cam = class_activation_map(&[1.0], &a, 0, 0).unwrap();
        prop_assert_eq!(cam.values, a.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
        let zero = class_activation_map(&[0.0], &a, 0, 0).unwrap();
        prop_assert!(zero.values.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn upsampling_examples() {
    let (h, _) = common::toy_network(0);
    let cam = ClassActivationMap {
        level: 1,
        class: 1,
        values: vec![0.25, 3.0],
        finest_values: None,
    };
    let up = upsample_cam(&cam, &h).unwrap();
    let fine = up.finest_values.unwrap();
    assert_eq!(fine, [vec![0.25; 8], vec![3.0; 8]].concat());
    let same = ClassActivationMap {
        level: h.depth(),
        values: (0..16).map(f64::from).collect(),
        ..cam.clone()
    };
    assert_eq!(upsample_cam(&same, &h).unwrap().finest_values.unwrap(), same.values);
    let too_deep = ClassActivationMap { level: h.depth() + 1, ..cam };
    assert!(upsample_cam(&too_deep, &h).is_err());
}

/// The sample's own upsampled map and its predicted class.
fn own_map(seed: u64) -> (SampleSet, Vec<f64>, usize) {
    let (h, mut model) = common::toy_network(seed);
    let x = random_vec(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc), model.input_len());
    let level = cam_level(&model, &h).unwrap();
    let (_, probs) = grad_cam_batch(&mut model, &x, 1, 0, level).unwrap();
    let class = usize::from(probs[0] >= 0.5);
    let (cams, _) = grad_cam_batch(&mut model, &x, 1, class, level).unwrap();
    let fine = upsample_to_finest(&h, &cams[0].values, level).unwrap();
    let data = SampleSet {
        n_nodes: 16,
        n_features: 2,
        features: vec![x.clone(), x],
        labels: vec![class as u8; 2],
    };
    (data, fine, class)
}

#[test]
fn single_true_positive_average_is_its_own_map() {
    for seed in 0..5 {
        let (data, fine, class) = own_map(seed);
        let (h, mut model) = common::toy_network(seed);
        let (avg, count) = average_tp_cam(&mut model, &data, &[0], class, &h).unwrap();
        assert_eq!(count, 1);
        assert_eq!(avg, fine);
    }
}

#[test]
fn identical_true_positives_average_to_either_map() {
    for seed in 0..5 {
        let (data, fine, class) = own_map(seed);
        let (h, mut model) = common::toy_network(seed);
        let (avg, count) = average_tp_cam(&mut model, &data, &[0, 1], class, &h).unwrap();
        assert_eq!(count, 2);
        assert_eq!(avg, fine);
    }
}

#[test]
fn no_true_positives_is_an_error() {
    let (mut data, _, class) = own_map(3);
    data.labels = vec![1 - class as u8; 2];
    let (h, mut model) = common::toy_network(3);
    assert!(average_tp_cam(&mut model, &data, &[0, 1], class, &h).is_err());
    assert!(grad_cam_batch(&mut model, &data.features[0], 1, 2, 2).is_err());
}

#[test]
fn max_normalization_scales_to_unit_peak() {
    let v = max_normalized(&[0.5, 2.0, 1.0]);
    assert_eq!(v, vec![0.25, 1.0, 0.5]);
}
