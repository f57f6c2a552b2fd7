use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::*;
use crate::linalg::{determinant, svd};
use crate::mc::{integrate, l2_inner, McConfig};

fn cube(d: usize, lo: f64, hi: f64) -> DomainBox {
    DomainBox::cube(d, lo, hi).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn two_layer(flavor: ModelFlavor, mode: DomainMode, w: f64) -> NetworkSpec {
    NetworkSpec::new(
        flavor,
        cube(2, 0.0, 1.0),
        vec![
            LayerSpec::dense(Matrix::identity(2).scale(w), vec![0.0; 2], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        mode,
    )
    .unwrap()
}

#[test]
fn propagation_examples() {
    let t = two_layer(ModelFlavor::Plain, DomainMode::Tight, 2.0);
    assert_eq!(t.layers[0].tilde(), &cube(2, 0.0, 2.0));
    assert_eq!(t.layers[0].post(), &cube(2, 0.0, 2f64.tanh()));
    let r = two_layer(ModelFlavor::Plain, DomainMode::NormRecipe, 2.0);
    assert_eq!(r.layers[0].tilde(), &DomainBox::symmetric(2, 2.0).unwrap());
    // recipe boxes always contain the tight ones
    for (rl, tl) in r.layers.iter().zip(&t.layers) {
        assert!(rl.tilde().contains_box(tl.tilde()));
        assert!(rl.post().contains_box(tl.post()));
    }
}

#[test]
fn recipe_is_inflated_when_it_misses_the_image() {
    // ‖(1,1)/√2‖ = 1 but the corner (1,1) maps to √2 > 1
    let s = 0.5f64.sqrt();
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(2, -1.0, 1.0),
        vec![LayerSpec::dense(Matrix::from_rows(&[vec![s, s]]).unwrap(), vec![0.0], None)],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::NormRecipe,
    )
    .unwrap();
    assert!(spec.layers[0].tilde().upper()[0] >= 2f64.sqrt() - 1e-15);
}

#[test]
fn declared_boxes_are_checked_and_inflated() {
    let layer = LayerSpec::dense(Matrix::identity(1).scale(2.0), vec![0.0], None)
        .with_domains(cube(1, 0.0, 1.0), cube(1, 0.0, 1.0));
    let spec = NetworkSpec::new(
        ModelFlavor::General,
        cube(1, 0.0, 1.0),
        vec![layer],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    assert_eq!(spec.layers[0].tilde(), &cube(1, 0.0, 2.0));
}

#[test]
fn forward_examples() {
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(3, -1.0, 1.0),
        vec![
            LayerSpec::dense(Matrix::identity(3), vec![0.0; 3], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(3), vec![0.0; 3], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(3), vec![0.0; 3], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    assert_eq!(spec.forward(&[0.0; 3]).unwrap(), Complex64::new(1.0, 0.0));

    let lin = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(1, -5.0, 5.0),
        vec![LayerSpec::dense(Matrix::identity(1).scale(2.0), vec![0.0], None)],
        FinalTransform::coordinate(0),
        DomainMode::Tight,
    )
    .unwrap();
    assert_eq!(lin.forward(&[3.0]).unwrap(), Complex64::new(6.0, 0.0));

    let h = NetworkSpec::new(
        ModelFlavor::Heisenberg,
        cube(2, -1.0, 1.0),
        vec![LayerSpec::heisenberg(vec![0.0; 2], vec![0.0; 2], PI / 2.0, None)],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    let z = h.forward(&[0.0, 0.0]).unwrap();
    assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-15);
}

#[test]
fn heisenberg_phase_accumulates() {
    // phase = c - <a,b>/2 + <a,x>, then v(x - b)
    let a = vec![0.3, -0.2];
    let b = vec![0.1, 0.4];
    let h = NetworkSpec::new(
        ModelFlavor::Heisenberg,
        cube(2, -1.0, 1.0),
        vec![LayerSpec::heisenberg(a.clone(), b.clone(), 0.7, None)],
        FinalTransform::gaussian_bump(2.0),
        DomainMode::Tight,
    )
    .unwrap();
    let x = [0.5, -0.25];
    let phase = 0.7 - 0.5 * (0.3 * 0.1 - 0.2 * 0.4) + (0.3 * 0.5 + 0.2 * 0.25);
    let r2 = (0.5f64 - 0.1).powi(2) + (-0.25f64 - 0.4).powi(2);
    let expect = Complex64::from_polar(2.0 * (-r2).exp(), phase);
    assert!((h.forward(&x).unwrap() - expect).norm() < 1e-14);
}

#[test]
fn nan_reports_the_layer() {
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(1, -1.0, 1.0),
        vec![LayerSpec::dense(Matrix::identity(1).scale(1e300), vec![0.0], None)],
        FinalTransform::coordinate(0),
        DomainMode::Tight,
    )
    .unwrap();
    // 1e300 * 1e10 overflows
    match spec.forward(&[1e10]) {
        Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 1),
        other => panic!("expected a numeric error, got {other:?}"),
    }
}

#[test]
fn rejects_bad_architectures() {
    let d = cube(2, 0.0, 1.0);
    let g = FinalTransform::gaussian_bump(1.0);
    let relu = LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], Some(ActivationSpec::Relu));
    let last = LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None);
    assert!(matches!(
        NetworkSpec::new(ModelFlavor::Plain, d.clone(), vec![relu, last.clone()], g.clone(), DomainMode::Tight),
        Err(Error::UnsupportedActivation(_))
    ));
    let tall = LayerSpec::dense(Matrix::zeros(3, 2), vec![0.0; 3], None);
    assert!(NetworkSpec::new(ModelFlavor::AffineScaled, d.clone(), vec![tall], g.clone(), DomainMode::Tight).is_err());
    let wrong = LayerSpec::dense(Matrix::identity(3), vec![0.0; 3], None);
    assert!(NetworkSpec::new(ModelFlavor::Plain, d.clone(), vec![wrong], g.clone(), DomainMode::Tight).is_err());
    let pool_first = vec![LayerSpec::pool(2), LayerSpec::conv(ConvKernel::delta(vec![2], 1.0).unwrap(), None)];
    assert!(NetworkSpec::new(ModelFlavor::Cnn, d, pool_first, g, DomainMode::Tight).is_err());
}

#[test]
fn pooling_has_unit_singular_values() {
    for m in [2, 4] {
        let p = pool_matrix(8, m).unwrap();
        let s = svd(&p).unwrap();
        assert_eq!(s.numerical_rank, 8 / m);
        for v in &s.singular_values[..8 / m] {
            assert!((v - 1.0).abs() < 1e-10);
        }
        // idempotent averaging
        let pp = p.matmul(&p).unwrap();
        assert!(pp.sub(&p).unwrap().frobenius_norm() < 1e-15);
    }
    assert!(pool_matrix(6, 4).is_err());
}

#[test]
fn cnn_forward_pools_and_gates() {
    let theta = ConvKernel::new(vec![4], vec![1.0, 0.5, 0.0, 0.0]).unwrap();
    let spec = NetworkSpec::new(
        ModelFlavor::Cnn,
        cube(4, -1.0, 1.0),
        vec![
            LayerSpec::conv(theta, Some(ActivationSpec::Tanh)),
            LayerSpec::pool(2),
            LayerSpec::conv(ConvKernel::delta(vec![4], 1.0).unwrap(), None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    let x = [0.2, -0.4, 0.6, 0.1];
    let t = spec.trace(&x).unwrap();
    assert!(t.inside);
    let pooled = &t.post[1];
    assert_eq!(pooled[0], pooled[1]);
    assert_eq!(pooled[2], pooled[3]);
    assert!(spec.forward(&x).unwrap().re > 0.0);
    assert_eq!(spec.forward(&[2.0, 0.0, 0.0, 0.0]).unwrap(), Complex64::new(0.0, 0.0));
}

#[test]
fn affine_scaled_example() {
    let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.5]]).unwrap();
    let b = vec![0.25, -0.5];
    let spec = NetworkSpec::new(
        ModelFlavor::AffineScaled,
        cube(2, -1.0, 1.0),
        vec![LayerSpec::dense(w.clone(), b.clone(), None)],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    assert_relative_eq!(spec.output_scale(), 3f64.sqrt(), epsilon = 1e-15);
    let x = [0.5, 0.5];
    let y = w.matvec(&[0.25, 1.0]).unwrap();
    let expect = 3f64.sqrt() * (-(y[0] * y[0] + y[1] * y[1])).exp();
    assert_relative_eq!(spec.forward(&x).unwrap().re, expect, max_relative = 1e-14);
}

#[test]
fn spec_file_round_trip_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let w = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![0.0, 1.0]]).unwrap();
    write_kbw(&dir.path().join("w1.kbw"), &w).unwrap();
    assert_eq!(read_kbw(&dir.path().join("w1.kbw")).unwrap(), w);
    let text = r#"{
        "model_flavor": "plain",
        "input_domain": {"lower": [-1, -1], "upper": [1, 1]},
        "domain_mode": "norm_recipe",
        "layers": [
            {"kind": "dense", "weights": {"file": "w1.kbw"}, "bias": [0, 0, 0.5], "activation": {"kind": "tanh"}},
            {"kind": "dense", "weights": [[1, 0, 0]], "bias": [0]}
        ],
        "final": {"kind": "gaussian_bump", "w3": 1.0, "norm_mode": "exact"}
    }"#;
    let path = dir.path().join("net.json");
    std::fs::write(&path, text).unwrap();
    let spec = NetworkSpec::load(&path).unwrap();
    assert_eq!(spec.layers[0].weights().unwrap(), &w);
    assert_eq!(spec.domain_mode, DomainMode::NormRecipe);
    let again = SpecFile::from_json(&spec.to_json().unwrap()).unwrap().into_spec(None).unwrap();
    assert_eq!(again, spec);

    let unknown = text.replace("\"bias\": [0]}", "\"bias\": [0], \"colour\": 1}");
    assert!(SpecFile::from_json(&unknown).is_err());
    std::fs::write(dir.path().join("bad.kbw"), b"KBW2\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
    assert!(read_kbw(&dir.path().join("bad.kbw")).is_err());
}

#[test]
fn regularizer_constants() {
    let p = Regularizer::new(vec![0.0; 3], 2.0, Normalization::UnitL2).unwrap();
    assert_relative_eq!(p.constant(), (4.0 / PI).powf(0.75), epsilon = 1e-15);
    assert!(Regularizer::new(vec![0.0], 0.0, Normalization::UnitL2).is_err());
}

#[test]
fn regularized_forward_of_constant_is_the_mass() {
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(2, -1.0, 1.0),
        vec![LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None)],
        FinalTransform::constant(2, 1.0),
        DomainMode::Tight,
    )
    .unwrap();
    for c in [0.5, 1.0, 7.0] {
        let p = Regularizer::new(vec![0.2, -0.3], c, Normalization::UnitL2).unwrap();
        let e = regularized_forward(&spec, &p, &p.matched_proposal(1000, 3)).unwrap();
        // Gaussian integral oracle: (2c/π)^{d/4} (π/c)^{d/2}
        let oracle = (2.0 * c / PI).powf(0.5) * (PI / c);
        assert_relative_eq!(e.value.re, oracle, max_relative = 1e-12);
        assert_relative_eq!(p.mass(), oracle, max_relative = 1e-12);
    }
}

#[test]
fn regularized_forward_concentrates_as_width_grows() {
    let w = Matrix::from_rows(&[vec![0.8, 0.3], vec![-0.2, 0.9]]).unwrap();
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(2, -1.0, 1.0),
        vec![
            LayerSpec::dense(w, vec![0.1, -0.1], Some(ActivationSpec::Tanh)),
            LayerSpec::dense(Matrix::identity(2), vec![0.0; 2], None),
        ],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap();
    let x = vec![0.3, -0.4];
    let p = Regularizer::new(x.clone(), 1e4, Normalization::UnitMass).unwrap();
    let e = regularized_forward(&spec, &p, &p.matched_proposal(20_000, 4)).unwrap();
    let f = spec.forward(&x).unwrap().re;
    assert!((e.value.re - f).abs() <= 0.02 * f.abs(), "{} vs {f}", e.value.re);
}

#[test]
fn regularized_forward_of_odd_function_vanishes() {
    let spec = NetworkSpec::new(
        ModelFlavor::Plain,
        cube(1, -1.0, 1.0),
        vec![LayerSpec::dense(Matrix::identity(1), vec![-0.25], None)],
        FinalTransform::coordinate(0),
        DomainMode::Tight,
    )
    .unwrap();
    let p = Regularizer::new(vec![0.25], 3.0, Normalization::UnitL2).unwrap();
    let e = regularized_forward(&spec, &p, &p.matched_proposal(20_000, 5)).unwrap();
    assert!(e.value.re.abs() <= 3.0 * e.stderr, "{e:?}");
}

#[test]
fn regularizer_has_unit_norm() {
    for d in 1..=3 {
        for c in [1.0, 10.0, 100.0] {
            let p = Regularizer::new(vec![0.1; d], c, Normalization::UnitL2).unwrap();
            let cfg = McConfig::gaussian(20_000, 6, p.center.clone(), c);
            let e = integrate(&cfg, "norm", |y| p.eval(y).powi(2)).unwrap();
            assert!(e.within(1.0, 3.0), "d={d} c={c}: {e:?}");
        }
    }
}

#[test]
fn gaussian_overlaps() {
    let x = vec![0.0, 0.0];
    let y = vec![1.0, 1.0];
    let px = Regularizer::new(x.clone(), 1.0, Normalization::UnitL2).unwrap();
    let py = Regularizer::new(y.clone(), 1.0, Normalization::UnitL2).unwrap();
    let cfg = McConfig::gaussian(50_000, 7, vec![0.5, 0.5], 1.0);
    let f = |p: &Regularizer| {
        let p = p.clone();
        move |z: &[f64]| Complex64::new(p.eval(z), 0.0)
    };
    let same = l2_inner(f(&px), f(&px), &cfg.with_proposal(px.matched_proposal(1000, 0).proposal)).unwrap();
    assert!((same.value.re - 1.0).abs() <= 3.0 * same.stderr + 1e-12);
    let cross = l2_inner(f(&px), f(&py), &cfg).unwrap();
    assert!((cross.value.re - (-1f64).exp()).abs() <= 3.0 * cross.stderr, "{cross:?}");
    // odd times even about the proposal center
    let odd = |z: &[f64]| Complex64::new(z[0] - 0.5, 0.0);
    let even = |z: &[f64]| Complex64::new((-(z[0] - 0.5).powi(2)).exp(), 0.0);
    let e = l2_inner(odd, even, &cfg).unwrap();
    assert!(e.value.re.abs() <= 3.0 * e.stderr);
}

#[test]
fn heisenberg_representation_preserves_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..5 {
        let a: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = NetworkSpec::new(
            ModelFlavor::Heisenberg,
            cube(2, -3.0, 3.0),
            vec![LayerSpec::heisenberg(a, b.clone(), rng.random_range(-3.0..3.0), None)],
            FinalTransform::gaussian_bump(1.0),
            DomainMode::Tight,
        )
        .unwrap();
        let cfg = McConfig::gaussian(40_000, trial, b, 1.0);
        let e = integrate(&cfg, "unitary", |x| spec.eval(x).unwrap().norm_sqr()).unwrap();
        // ‖h‖² for h = exp(-‖x‖²) on ℝ²
        assert!(e.within(PI / 2.0, 3.0), "{e:?}");
    }
}

fn random_dense_spec(seed: u64, flavor: ModelFlavor) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d0 = rng.random_range(1..=3);
    let d1 = rng.random_range(1..=4);
    let d2 = rng.random_range(1..=3);
    let acts = [
        ActivationSpec::Tanh,
        ActivationSpec::Sigmoid,
        ActivationSpec::LeakyRelu { slope: 0.3 },
        ActivationSpec::smooth_leaky_relu(),
    ];
    let a1 = acts[rng.random_range(0..acts.len())];
    let w1 = random_matrix(&mut rng, d1, d0);
    let b1: Vec<f64> = (0..d1).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w2 = random_matrix(&mut rng, d2, d1);
    let b2: Vec<f64> = (0..d2).map(|_| rng.random_range(-0.5..0.5)).collect();
    let lo: Vec<f64> = (0..d0).map(|_| rng.random_range(-1.0..0.0)).collect();
    let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.1..1.5)).collect();
    NetworkSpec::new(
        flavor,
        DomainBox::new(lo, hi).unwrap(),
        vec![LayerSpec::dense(w1, b1, Some(a1)), LayerSpec::dense(w2, b2, None)],
        FinalTransform::gaussian_bump(1.0),
        DomainMode::Tight,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn intermediates_stay_in_tight_boxes(seed in any::<u64>()) {
        let spec = random_dense_spec(seed, ModelFlavor::Plain);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..1000 {
            let u: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random::<f64>()).collect();
            let x = spec.input_domain.from_unit(&u);
            let t = spec.trace(&x).unwrap();
            prop_assert!(t.inside);
        }
    }

    #[test]
    fn gating_matches_plain_inside_and_vanishes_outside(seed in any::<u64>()) {
        let plain = random_dense_spec(seed, ModelFlavor::Plain);
        let gated = random_dense_spec(seed, ModelFlavor::General);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for _ in 0..50 {
            let u: Vec<f64> = (0..plain.input_dim()).map(|_| rng.random::<f64>()).collect();
            let x = plain.input_domain.from_unit(&u);
            prop_assert_eq!(gated.forward(&x).unwrap(), plain.forward(&x).unwrap());
            let mut out = x.clone();
            out[0] = plain.input_domain.upper()[0] + 0.1 + rng.random::<f64>();
            prop_assert_eq!(gated.eval(&out).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn affine_scaling_is_the_determinant_product(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=3);
        let layers: Vec<(Matrix, Vec<f64>)> = (0..2)
            .map(|_| (random_matrix(&mut rng, d, d), (0..d).map(|_| rng.random_range(-0.5..0.5)).collect()))
            .collect();
        let dets: f64 = layers.iter().map(|(w, _)| determinant(w).unwrap().abs().sqrt()).product();
        prop_assume!(dets > 1e-6);
        let build = |flavor| {
            let mut ls: Vec<LayerSpec> = layers
                .iter()
                .map(|(w, b)| LayerSpec::dense(w.clone(), b.clone(), Some(ActivationSpec::Tanh)))
                .collect();
            ls.last_mut().unwrap().activation = None;
            NetworkSpec::new(flavor, cube(d, -1.0, 1.0), ls, FinalTransform::gaussian_bump(1.0), DomainMode::Tight)
                .unwrap()
        };
        let scaled = build(ModelFlavor::AffineScaled);
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            // unscaled oracle of the same shifted composite
            let mut z = x.clone();
            for (l, (w, b)) in layers.iter().enumerate() {
                let s: Vec<f64> = z.iter().zip(b).map(|(v, b)| v - b).collect();
                z = w.matvec(&s).unwrap();
                if l == 0 {
                    z = z.iter().map(|v| v.tanh()).collect();
                }
            }
            let plain = (-z.iter().map(|v| v * v).sum::<f64>()).exp();
            prop_assume!(plain > 1e-200);
            let ratio = scaled.forward(&x).unwrap().re / plain;
            prop_assert!((ratio - dets).abs() <= 1e-12 * dets, "{ratio} vs {dets}");
        }
    }
}
