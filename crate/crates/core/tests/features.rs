mod common;

use common::{gauss, gauss_expect, simpson};
use proptest::prelude::*;
use sindex::features::{
    build_operator, empirical_kernel, kernel, kernel_closed_form, operator::relu_pair_inner, regularized_projection,
    sample_bank, Activation, Backend, FeatureBank, FeatureOperator,
};
use sindex::hermite::{relu_coeffs_closed_form, QuadratureRule};

/// `κ(u, v) = E_{b ~ N(0, τ²), ε}[relu(εu - b) relu(εv - b)]` by Simpson in `b`.
fn kernel_oracle(tau: f64, u: f64, v: f64) -> f64 {
    let f = |b: f64| {
        let dens = gauss(b / tau) / tau;
        let p = |e: f64| (e * u - b).max(0.0) * (e * v - b).max(0.0);
        dens * 0.5 * (p(1.0) + p(-1.0))
    };
    let mut pts = [-12.0 * tau, u, v, -u, -v, 12.0 * tau];
    pts.sort_by(f64::total_cmp);
    pts.windows(2).filter(|w| w[1] > w[0]).map(|w| simpson(f, w[0], w[1], 4000)).sum()
}

#[test]
fn kernel_forms_match_simpson_oracle() {
    for &(u, v) in &[(0.0, 0.0), (0.7, -1.2), (2.0, 2.0), (-3.5, 1.0), (5.0, -5.0)] {
        let o = kernel_oracle(2.0, u, v);
        assert!((kernel_closed_form(2.0, u, v).unwrap() - o).abs() < 1e-8, "({u}, {v})");
        assert!((kernel(2.0, Activation::Relu, u, v).unwrap() - o).abs() < 1e-8, "({u}, {v})");
    }
    // κ(0, 0) = E[b² 1(b < 0)] = τ²/2
    assert!((kernel_closed_form(2.0, 0.0, 0.0).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn empirical_kernel_concentrates() {
    let bank = sample_bank(200_000, 2.0, 11, Activation::Relu).unwrap();
    for &(u, v) in &[(0.5, 0.5), (1.0, -2.0)] {
        let e = empirical_kernel(&bank, u, v);
        let k = kernel_closed_form(2.0, u, v).unwrap();
        assert!((e - k).abs() < 0.05 * k.max(0.1), "({u}, {v}): {e} vs {k}");
    }
}

#[test]
fn bank_statistics() {
    let bank = sample_bank(50_000, 2.0, 5, Activation::Relu).unwrap();
    let n = bank.len() as f64;
    let mean: f64 = bank.biases().iter().sum::<f64>() / n;
    let var: f64 = bank.biases().iter().map(|b| b * b).sum::<f64>() / n;
    assert!(mean.abs() < 0.05 && (var - 4.0).abs() < 0.1);
    let plus = bank.signs().iter().filter(|&&e| e > 0.0).count() as f64 / n;
    assert!((plus - 0.5).abs() < 0.01);
    assert_eq!(bank, sample_bank(50_000, 2.0, 5, Activation::Relu).unwrap());
}

#[test]
fn operator_entries_match_simpson_oracle() {
    let bank = FeatureBank::from_parts(vec![-0.4, 1.3, 0.2], vec![1.0, -1.0, -1.0], 2.0, Activation::Relu).unwrap();
    let op = FeatureOperator::new(&bank, 6, 0.01).unwrap();
    let scale = 1.0 / 3f64.sqrt();
    let (b, e) = (bank.biases(), bank.signs());
    for i in 0..3 {
        for j in 0..=6 {
            let o = gauss_expect(|z| (e[i] * z - b[i]).max(0.0) * common::hermite_explicit(j, z), &[b[i] / e[i]]);
            assert!((op.t_matrix()[(i, j)] - scale * o).abs() < 1e-9);
        }
        for k in 0..3 {
            let o = gauss_expect(|z| (e[i] * z - b[i]).max(0.0) * (e[k] * z - b[k]).max(0.0), &[b[i] / e[i], b[k] / e[k]]);
            assert!((op.gram()[(i, k)] - o / 3.0).abs() < 1e-9);
            assert!((relu_pair_inner(b[i], e[i], b[k], e[k]) - o).abs() < 1e-9);
        }
    }
}

#[test]
fn smoothed_backend_agrees_with_relu_limit() {
    let bank = sample_bank(30, 2.0, 2, Activation::Relu).unwrap();
    let closed = FeatureOperator::new(&bank, 16, 0.01).unwrap();
    let quad = build_operator(&bank, 16, 0.01, &QuadratureRule::piecewise_default(&bank.kinks())).unwrap();
    assert!((closed.gram() - quad.gram()).amax() < 1e-10);
    assert!((closed.t_matrix() - quad.t_matrix()).amax() < 1e-10);
    let smooth = bank.with_activation(Activation::SmoothedRelu { rho: 0.999999 }).unwrap();
    let s_op = FeatureOperator::build(&smooth, 16, 0.01, &Backend::default_for(&smooth)).unwrap();
    assert!((closed.gram() - s_op.gram()).amax() < 1e-3);
}

#[test]
fn single_feature_target_is_reproduced() {
    let bank = sample_bank(64, 2.0, 8, Activation::Relu).unwrap();
    let op = FeatureOperator::new(&bank, 64, 1e-8).unwrap();
    let tf = op.gram().column(0) * 64f64.sqrt();
    let norm_sq = relu_pair_inner(bank.biases()[0], bank.signs()[0], bank.biases()[0], bank.signs()[0]);
    let p = op.project_target(&tf, norm_sq).unwrap();
    assert!(p.residual_sq < 1e-6, "{}", p.residual_sq);
    let relu = relu_coeffs_closed_form(64);
    let r = regularized_projection(&op, &relu).unwrap();
    assert!(r.residual_sq >= -1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gram_is_psd(seed in 0u64..1000, n in 2usize..40) {
        let bank = sample_bank(n, 2.0, seed, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 8, 0.01).unwrap();
        let g = op.gram();
        prop_assert!((g - g.transpose()).amax() < 1e-15);
        prop_assert!(g.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
    }

    #[test]
    fn kernel_is_symmetric_and_cauchy_schwarz(u in -6.0f64..6.0, v in -6.0f64..6.0) {
        let kuv = kernel_closed_form(2.0, u, v).unwrap();
        prop_assert!((kuv - kernel_closed_form(2.0, v, u).unwrap()).abs() < 1e-14);
        let kuu = kernel_closed_form(2.0, u, u).unwrap();
        let kvv = kernel_closed_form(2.0, v, v).unwrap();
        prop_assert!(kuv * kuv <= kuu * kvv * (1.0 + 1e-12));
        prop_assert!(kuv >= 0.0);
    }

    #[test]
    fn residual_monotone_in_lambda(seed in 0u64..200) {
        let bank = sample_bank(40, 2.0, seed, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 32, 1.0).unwrap();
        let relu = relu_coeffs_closed_form(32);
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 0.1, 0.01, 0.001] {
            let r = regularized_projection(&op.with_lambda(lambda).unwrap(), &relu).unwrap().residual_sq;
            prop_assert!(r <= prev + 1e-12);
            prev = r;
        }
    }
}
