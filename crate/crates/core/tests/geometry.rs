mod common;

use prunelens_core::geometry::{
    angle, class_directions, decompose_from_polar, decompose_probability, geometry_snapshot,
    margin, ClassDirections, GeometrySample,
};
use prunelens_core::nn::{Layer, Matrix, Network, NetworkSpec};
use prunelens_core::synth::{prototype_images, PrototypeConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::softmax;

fn directions(rows: &[Vec<f32>]) -> ClassDirections {
    ClassDirections::new(Matrix::from_rows(rows).unwrap()).unwrap()
}

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, d)
}

proptest! {
    #[test]
    fn decomposition_equals_softmax(
        x in vec_strategy(4),
        w in proptest::collection::vec(vec_strategy(4), 3),
    ) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let rows: Vec<Vec<f32>> = w.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        prop_assume!(rows.iter().all(|r| r.iter().any(|&v| v.abs() > 1e-3)));
        let dirs = directions(&rows);
        let logits: Vec<f64> = (0..3)
            .map(|j| dirs.direction(j).iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        let p = softmax(&logits);
        for (i, want) in p.iter().enumerate() {
            let got = decompose_probability(&x, &dirs, i).unwrap();
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn perturbations_inside_margin_keep_prediction(
        x in vec_strategy(3),
        w in proptest::collection::vec(vec_strategy(3), 4),
        dirs_seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f32>> = w.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let Ok(dirs) = ClassDirections::new(Matrix::from_rows(&rows).unwrap()) else { return Ok(()); };
        let logits = dirs.logits(&x);
        let pred = prunelens_core::nn::argmax(&logits);
        let Ok(mu) = margin(&x, &dirs, pred) else { return Ok(()); };
        prop_assume!(mu > 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(dirs_seed);
        for _ in 0..20 {
            let d: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(n > 1e-9);
            let r = mu * 0.999 * rng.random::<f64>();
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + r * b / n).collect();
            prop_assert_eq!(prunelens_core::nn::argmax(&dirs.logits(&y)), pred);
        }
    }

    #[test]
    fn polar_form_is_scale_consistent(length in 0.1f64..5.0, c in proptest::collection::vec(-1.0f64..1.0, 3)) {
        let norms = [1.0, 2.0, 0.5];
        let total: f64 = (0..3).map(|i| decompose_from_polar(length, &norms, &c, i)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn one_hot_toy_model() {
    let dirs = directions(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    let s = GeometrySample::measure(7, 1, &[0.0, 2.0, 0.0], &dirs).unwrap();
    assert_eq!(s.angles, vec![90.0, 0.0, 90.0]);
    assert_eq!(s.length, 2.0);
    assert!(s.correct);
    // nearest boundary: (W1 - W0)·X / ‖W1 - W0‖ = 2 / √2
    assert!((s.margin - 2f64.sqrt()).abs() < 1e-12);
    let wrong = GeometrySample::measure(8, 0, &[0.0, 2.0, 0.0], &dirs).unwrap();
    assert!(wrong.margin < 0.0);
    assert_eq!(angle(&[1.0, 1.0], &[1.0, 0.0]).unwrap().round(), 45.0);
}

#[test]
fn degenerate_feature_is_flagged_and_serialized_as_null() {
    let dirs = directions(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let s = GeometrySample::measure(1, 0, &[0.0, 0.0], &dirs).unwrap();
    assert!(s.degenerate);
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"angles\":[null,null]"), "{json}");
    let back: GeometrySample = serde_json::from_str(&json).unwrap();
    assert!(back.angles.iter().all(|a| a.is_nan()));
}

#[test]
fn untrained_angles_cluster_near_ninety() {
    let data = prototype_images(300, &PrototypeConfig::default(), 3);
    let net = Network::new(NetworkSpec::new(vec![144, 512, 10], 4)).unwrap();
    let snap = geometry_snapshot(&net, &data, "u", 0).unwrap();
    let angles: Vec<f64> = snap.samples.iter().flat_map(|s| s.angles.clone()).collect();
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    assert!((85.0..=92.0).contains(&mean), "{mean}");
}

#[test]
fn snapshot_predictions_match_network() {
    let data = prototype_images(200, &PrototypeConfig::default(), 5);
    let net = Network::new(NetworkSpec::new(vec![144, 20, 10], 6)).unwrap();
    let snap = geometry_snapshot(&net, &data, "p", 0).unwrap();
    let pred = net.predict(data.inputs()).unwrap();
    for (s, p) in snap.samples.iter().zip(pred) {
        assert_eq!(s.predicted_label, p);
    }
    assert!((snap.accuracy() - net.accuracy(&data).unwrap()).abs() < 1e-12);
}

#[test]
fn zero_class_direction_is_rejected() {
    let spec = NetworkSpec::new(vec![2, 2], 0);
    let layer = Layer::new(
        Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        None,
        Matrix::filled(2, 2, 1.0),
    )
    .unwrap();
    let net = Network::from_layers(spec, vec![layer]).unwrap();
    assert!(class_directions(&net).is_err());
}
