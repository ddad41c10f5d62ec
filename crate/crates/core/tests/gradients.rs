//! Analytic gradients and input Jacobians against central finite
//! differences, on small random architectures.

use hnsc::nn::{encode_batch, Mlp, MlpArchitecture};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn setup(arch: MlpArchitecture, seed: u64) -> (Mlp<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mlp::<f64>::new(arch, seed).unwrap();
    let last = m.layers.len() - 1;
    m.layers[last].weight.mapv_inplace(|w| w * 100.0);
    for l in &mut m.layers {
        l.bias.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    let raw = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-0.6..0.6));
    let x = encode_batch(raw.view(), arch.positional_levels);
    let y = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
    (m, x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parameter_gradients_match_finite_differences(
        layers in 1usize..5,
        width in 2usize..10,
        levels in 0usize..3,
        seed in any::<u64>(),
    ) {
        let arch = MlpArchitecture::new(layers, width, levels);
        let (m, x, y) = setup(arch, seed);
        let (_, grads) = m.forward_backward(x.view(), y.view()).unwrap();
        let analytic = grads.slices().concat();
        let flat = m.flat();
        let mut params = flat.clone();
        for i in 0..flat.len() {
            params[i] = flat[i] + H;
            let up = Mlp::from_flat(arch, &params).unwrap().forward_backward(x.view(), y.view()).unwrap().0;
            params[i] = flat[i] - H;
            let down = Mlp::from_flat(arch, &params).unwrap().forward_backward(x.view(), y.view()).unwrap().0;
            params[i] = flat[i];
            let numeric = (up - down) / (2.0 * H);
            prop_assert!(rel(analytic[i], numeric) < 1e-6, "param {i}: {} vs {numeric}", analytic[i]);
        }
    }

    #[test]
    fn input_jacobian_matches_finite_differences(
        layers in 1usize..6,
        width in 2usize..12,
        levels in 0usize..3,
        seed in any::<u64>(),
    ) {
        let arch = MlpArchitecture::new(layers, width, levels);
        let (m, x, _) = setup(arch, seed);
        let p: Array1<f64> = x.row(0).to_owned();
        let j = m.input_jacobian(p.view()).unwrap();
        prop_assert_eq!(j.dim(), (3, arch.input_dim));
        for k in 0..arch.input_dim {
            let mut a = p.clone();
            a[k] += H;
            let mut b = p.clone();
            b[k] -= H;
            let fa = m.forward(a.insert_axis(Axis(0)).view()).unwrap();
            let fb = m.forward(b.insert_axis(Axis(0)).view()).unwrap();
            for r in 0..3 {
                let numeric = (fa[[0, r]] - fb[[0, r]]) / (2.0 * H);
                prop_assert!(rel(j[[r, k]], numeric) < 1e-6);
            }
        }
    }
}

#[test]
fn f32_training_gradients_track_f64() {
    let arch = MlpArchitecture::new(3, 8, 1);
    let (m, x, y) = setup(arch, 5);
    let (l64, g64) = m.forward_backward(x.view(), y.view()).unwrap();
    let m32: Mlp<f32> = m.cast();
    let (l32, g32) = m32
        .forward_backward(x.mapv(|v| v as f32).view(), y.mapv(|v| v as f32).view())
        .unwrap();
    assert!((l64 - l32 as f64).abs() <= 1e-5 * l64.abs());
    for (a, b) in g64.slices().concat().iter().zip(g32.slices().concat()) {
        assert!((a - b as f64).abs() <= 1e-4 * a.abs().max(1.0));
    }
}
