//! Hand-derived backpropagation against central finite differences.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpinn::model::{backward, forward, init_network, NetworkParams, NetworkSpec};

/// Linear functional `Σ w ⊙ y` of the network output.
fn functional(params: &NetworkParams, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
    (&forward(params, x).unwrap().0 * w).sum()
}

fn check(spec: NetworkSpec, directions: usize, seed: u64) -> f64 {
    let params = init_network(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((9, spec.input_dim), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((9, spec.output_dim), |_| rng.random_range(-1.0..1.0));
    let (_, acts) = forward(&params, &x).unwrap();
    let grad = backward(&params, &acts, &w).unwrap().to_vec();
    let theta = params.trainable.to_vec();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let dir: Vec<f64> = (0..theta.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = |sign: f64| {
            let mut p = params.clone();
            let v: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + sign * h * d).collect();
            p.trainable.set_from_slice(&v).unwrap();
            functional(&p, &x, &w)
        };
        let fd = (at(1.0) - at(-1.0)) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1e-12));
    }
    worst
}

#[test]
fn small_network_gradient_2d() {
    let spec = NetworkSpec {
        width: 8,
        depth: 2,
        ..NetworkSpec::new(2)
    };
    let worst = check(spec, 24, 1);
    assert!(worst <= 1e-6, "relative error {worst:e}");
}

#[test]
fn small_network_gradient_3d_with_scale() {
    let spec = NetworkSpec {
        width: 8,
        depth: 3,
        rff_count: 5,
        rff_scale: 2.0,
        output_scale: 0.3,
        seed: 9,
        ..NetworkSpec::new(3)
    };
    let worst = check(spec, 20, 2);
    assert!(worst <= 1e-6, "relative error {worst:e}");
}
