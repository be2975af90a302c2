mod common;

use common::{gauss_expect, hermite_explicit};
use proptest::prelude::*;
use sindex::hermite::{
    eval_hermite, hermite_values, project_to_series, relu_coeffs_closed_form, HermiteSeries, QuadratureRule,
};

#[test]
fn recurrence_matches_explicit_polynomials() {
    for j in 0..=12 {
        for k in 0..=30 {
            let z = -3.0 + 0.2 * k as f64;
            let (a, b) = (eval_hermite(j, z), hermite_explicit(j, z));
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "j={j} z={z}: {a} vs {b}");
        }
    }
}

#[test]
fn relu_coefficients_match_simpson_oracle() {
    let exact = relu_coeffs_closed_form(20);
    assert!((exact.coeff(0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    assert_eq!(exact.coeff(1), 0.5);
    for j in 0..=20 {
        let oracle = gauss_expect(|z| z.max(0.0) * hermite_explicit(j, z), &[0.0]);
        assert!((exact.coeff(j) - oracle).abs() < 1e-8, "j={j}: {} vs {oracle}", exact.coeff(j));
    }
}

#[test]
fn gauss_hermite_integrates_polynomials_exactly() {
    // E[z^{2k}] = (2k-1)!!
    let q = QuadratureRule::gauss_hermite(20).unwrap();
    let mut df = 1.0;
    for k in 1..=19 {
        df *= (2 * k - 1) as f64;
        let v = q.expect(|z| z.powi(2 * k));
        assert!((v / df - 1.0).abs() < 1e-10, "moment {}", 2 * k);
    }
}

#[test]
fn projection_of_finite_polynomial_is_exact() {
    // z³ = √6 h_3 + 3 h_1
    let s = project_to_series(|z| z.powi(3), 6, &QuadratureRule::gauss_hermite(16).unwrap()).unwrap();
    assert!((s.coeff(3) - 6f64.sqrt()).abs() < 1e-12);
    assert!((s.coeff(1) - 3.0).abs() < 1e-12);
    for j in [0, 2, 4, 5, 6] {
        assert!(s.coeff(j).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn orthonormal(i in 0usize..=15, j in 0usize..=15) {
        let q = QuadratureRule::gauss_hermite(40).unwrap();
        let v = q.expect(|z| eval_hermite(i, z) * eval_hermite(j, z));
        let expected = if i == j { 1.0 } else { 0.0 };
        prop_assert!((v - expected).abs() < 1e-10);
    }

    #[test]
    fn derivative_identity(j in 1usize..=12, z in -4.0f64..4.0) {
        let h = 1e-5;
        let fd = (eval_hermite(j, z + h) - eval_hermite(j, z - h)) / (2.0 * h);
        prop_assert!((fd - (j as f64).sqrt() * eval_hermite(j - 1, z)).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn values_agree_with_single_evaluation(order in 0usize..30, z in -6.0f64..6.0) {
        let v = hermite_values(order, z);
        prop_assert_eq!(v.len(), order + 1);
        for (j, x) in v.iter().enumerate() {
            prop_assert!((x - eval_hermite(j, z)).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn ou_semigroup(coeffs in prop::collection::vec(-2.0f64..2.0, 1..25), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let s = HermiteSeries::new(coeffs).unwrap();
        let lhs = s.ou_transform(a).unwrap().ou_transform(b).unwrap();
        let rhs = s.ou_transform(a * b).unwrap();
        for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn series_eval_matches_sum(coeffs in prop::collection::vec(-1.0f64..1.0, 1..12), z in -3.0f64..3.0) {
        let s = HermiteSeries::new(coeffs.clone()).unwrap();
        let direct: f64 = coeffs.iter().enumerate().map(|(j, a)| a * hermite_explicit(j, z)).sum();
        prop_assert!((s.eval(z) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn derivative_series_matches_finite_difference(coeffs in prop::collection::vec(-1.0f64..1.0, 2..10), z in -2.0f64..2.0) {
        let s = HermiteSeries::new(coeffs).unwrap();
        let h = 1e-5;
        let fd = (s.eval(z + h) - s.eval(z - h)) / (2.0 * h);
        prop_assert!((s.derivative().eval(z) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn information_exponent_is_first_nonzero(lead in 1usize..8, tail in prop::collection::vec(0.1f64..1.0, 2..5)) {
        let mut c = vec![0.0; lead];
        c[0] = 0.7;
        c.extend(tail);
        let s = HermiteSeries::new(c).unwrap();
        prop_assert_eq!(s.information_exponent(1e-8).unwrap(), lead);
        let stripped = s.strip_low_order(lead + 1).unwrap();
        prop_assert!((stripped.norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(stripped.information_exponent(1e-8).unwrap(), lead + 1);
    }
}
