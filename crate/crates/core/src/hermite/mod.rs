//! Normalized (probabilist's) Hermite polynomials and truncated Hermite series.
//!
//! `h_j` is orthonormal in `L²(γ)` for the standard Gaussian `γ`, and obeys
//! `h_j' = √j h_{j-1}`. Functions of one variable are carried around as their
//! truncated coefficient vector `(α_0, …, α_J)`.

mod quadrature;

pub use quadrature::{QuadratureRule, PIECEWISE_RANGE};
pub(crate) use quadrature::{gauss_legendre, gaussian_pdf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation order for teacher series and operator assembly.
pub const DEFAULT_ORDER: usize = 64;
/// Default Gauss–Hermite node count.
pub const DEFAULT_NODES: usize = 128;
/// Default tolerance for treating a coefficient as nonzero.
pub const DEFAULT_NONZERO_TOL: f64 = 1e-8;
/// Tail mass above which a truncated teacher is flagged.
pub const TAIL_WARN_THRESHOLD: f64 = 1e-6;

/// `h_j(z)` via the three-term recurrence
/// `h_{k+1}(z) = (z h_k(z) - √k h_{k-1}(z)) / √(k+1)`.
pub fn eval_hermite(j: usize, z: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..j {
        let next = (z * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `(h_0(z), …, h_order(z))`.
pub fn hermite_values(order: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    hermite_values_into(order, z, &mut out);
    out
}

pub(crate) fn hermite_values_into(order: usize, z: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if order == 0 {
        return;
    }
    out.push(z);
    for k in 1..order {
        let next = (z * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        out.push(next);
    }
}

/// Truncated Hermite expansion `f = Σ_{j ≤ J} α_j h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesWire", into = "SeriesWire")]
pub struct HermiteSeries {
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SeriesWire {
    coeffs: Vec<f64>,
    truncation_order: usize,
}

impl TryFrom<SeriesWire> for HermiteSeries {
    type Error = Error;
    fn try_from(w: SeriesWire) -> Result<Self> {
        if w.coeffs.len() != w.truncation_order + 1 {
            return Err(Error::InvalidParameter(format!(
                "truncation_order {} does not match {} coefficients",
                w.truncation_order,
                w.coeffs.len()
            )));
        }
        HermiteSeries::new(w.coeffs)
    }
}

impl From<HermiteSeries> for SeriesWire {
    fn from(s: HermiteSeries) -> Self {
        let truncation_order = s.order();
        SeriesWire {
            coeffs: s.coeffs,
            truncation_order,
        }
    }
}

impl HermiteSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("series needs at least one coefficient".into()));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coefficient {bad}")));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    /// The single basis function `h_j`, truncated at `order`.
    pub fn basis(j: usize, order: usize) -> Self {
        let mut s = Self::zeros(order.max(j));
        s.coeffs[j] = 1.0;
        s
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient `α_j`, zero beyond the truncation order.
    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    /// Truncation order `J`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Zero-pad or truncate to a new order.
    pub fn with_order(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, 0.0);
        Self { coeffs }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let h = hermite_values(self.order(), z);
        self.coeffs.iter().zip(&h).map(|(a, h)| a * h).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &HermiteSeries) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| a * factor).collect(),
        }
    }

    /// Series of `f'`: `α_j ↦ √(j+1) α_{j+1}`, with truncation order `J - 1`
    /// (order 0 stays at order 0 with a zero coefficient).
    pub fn derivative(&self) -> Self {
        if self.order() == 0 {
            return Self::zeros(0);
        }
        let coeffs = (0..self.order())
            .map(|j| ((j + 1) as f64).sqrt() * self.coeffs[j + 1])
            .collect();
        Self { coeffs }
    }

    /// `(‖f‖_γ, ‖f'‖_γ, ‖f''‖_γ)` from the coefficient sums `Σα²`, `Σ jα²`,
    /// `Σ j(j-1)α²`.
    pub fn derivative_norms(&self) -> (f64, f64, f64) {
        let mut n0 = 0.0;
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        for (j, a) in self.coeffs.iter().enumerate() {
            let j = j as f64;
            let a2 = a * a;
            n0 += a2;
            n1 += j * a2;
            n2 += j * (j - 1.0) * a2;
        }
        (n0.sqrt(), n1.sqrt(), n2.sqrt())
    }

    /// `Σ j²(j-1)² α_j² = ‖f⁽⁴⁾‖² + 4‖f⁽³⁾‖² + 2‖f⁽²⁾‖²`.
    pub fn mixed_fourth_sum(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let j = j as f64;
                j * j * (j - 1.0) * (j - 1.0) * a * a
            })
            .sum()
    }

    /// Ornstein–Uhlenbeck smoothing `U_ρ`: `α_j ↦ ρ^j α_j`.
    pub fn ou_transform(&self, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("OU parameter {rho} outside [-1, 1]")));
        }
        let mut p = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|a| {
                let v = a * p;
                p *= rho;
                v
            })
            .collect();
        Ok(Self { coeffs })
    }

    /// Smallest `j ≥ 1` with `|α_j| > tol`.
    pub fn information_exponent(&self, tol: f64) -> Result<usize> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, a)| a.abs() > tol)
            .map(|(j, _)| j)
            .ok_or(Error::NoNonzeroCoefficient { tol })
    }

    /// Zero coefficients `0..s` and rescale the remainder to unit norm.
    pub fn strip_low_order(&self, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidParameter("strip order must be >= 1".into()));
        }
        let mut coeffs = self.coeffs.clone();
        for a in coeffs.iter_mut().take(s) {
            *a = 0.0;
        }
        let n: f64 = coeffs.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroTail(s));
        }
        Ok(Self {
            coeffs: coeffs.into_iter().map(|a| a / n).collect(),
        })
    }

    /// Estimate `Σ_{j > J} α_j²` by fitting a power law to the upper half of
    /// the nonzero coefficients. Returns 0 when no decay information exists
    /// (e.g. finite polynomials), and infinity if coefficients do not decay.
    pub fn estimated_tail_mass(&self) -> f64 {
        let j_max = self.order();
        let pts: Vec<(f64, f64)> = self
            .coeffs
            .iter()
            .enumerate()
            .skip((j_max / 2).max(1))
            .filter(|(_, a)| a.abs() > 1e-300)
            .map(|(j, a)| ((j as f64).ln(), a.abs().ln()))
            .collect();
        if pts.len() < 3 {
            return 0.0;
        }
        // upper envelope: oscillating series (e.g. odd/even vanishing) are
        // handled by fitting only the nonzero entries
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let p = crate::stats::slope(&xs, &ys);
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let log_a = my - p * mx;
        if p >= -0.5 {
            return f64::INFINITY;
        }
        // Σ_{j>J} A² j^{2p} ≈ A² J^{2p+1} / (-2p-1), scaled by the fraction
        // of nonzero entries
        let density = pts.len() as f64 / (j_max - (j_max / 2).max(1) + 1) as f64;
        let jf = j_max as f64;
        density * (2.0 * log_a).exp() * jf.powf(2.0 * p + 1.0) / (-2.0 * p - 1.0)
    }
}

/// `α_j = ⟨f, h_j⟩_γ` for `j = 0..=order`, by quadrature.
pub fn project_to_series<F: Fn(f64) -> f64>(
    f: F,
    order: usize,
    quad: &QuadratureRule,
) -> Result<HermiteSeries> {
    if quad.node_count() < order + 1 {
        return Err(Error::InsufficientQuadrature {
            nodes: quad.node_count(),
            required: order + 1,
            order,
        });
    }
    let mut coeffs = vec![0.0; order + 1];
    let mut h = Vec::with_capacity(order + 1);
    for (&z, &w) in quad.nodes().iter().zip(quad.weights()) {
        let fz = f(z) * w;
        if fz == 0.0 {
            continue;
        }
        hermite_values_into(order, z, &mut h);
        for (c, hj) in coeffs.iter_mut().zip(&h) {
            *c += fz * hj;
        }
    }
    HermiteSeries::new(coeffs)
}

/// Exact Hermite coefficients of `max(0, z)`.
///
/// `α_0 = 1/√(2π)`, `α_1 = 1/2`, and for `j ≥ 2`
/// `α_j = (H_j(0) + j H_{j-2}(0)) / √(2π j!)`, which in normalized form is
/// `(h_j(0) + √(j/(j-1)) h_{j-2}(0)) / √(2π)`. Odd `j ≥ 3` vanish.
pub fn relu_coeffs_closed_form(order: usize) -> HermiteSeries {
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let h0 = hermite_values(order, 0.0);
    let coeffs = (0..=order)
        .map(|j| match j {
            0 => inv_sqrt_2pi,
            1 => 0.5,
            _ if j % 2 == 1 => 0.0,
            _ => {
                let jf = j as f64;
                inv_sqrt_2pi * (h0[j] + (jf / (jf - 1.0)).sqrt() * h0[j - 2])
            }
        })
        .collect();
    HermiteSeries { coeffs }
}

/// The claimed decay envelope `j^{-5/4} / √(2π^{3/2})` for ReLU coefficients.
pub fn relu_decay_envelope(j: usize) -> f64 {
    (j as f64).powf(-1.25) / (2.0 * std::f64::consts::PI.powf(1.5)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gh128() -> QuadratureRule {
        QuadratureRule::gauss_hermite(128).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(eval_hermite(0, 7.3), 1.0);
        assert_eq!(eval_hermite(1, 2.5), 2.5);
        assert!(eval_hermite(2, 1.0).abs() < 1e-15);
        let z: f64 = 0.7;
        let h3 = (z.powi(3) - 3.0 * z) / 6f64.sqrt();
        assert!((eval_hermite(3, z) - h3).abs() < 1e-14);
    }

    #[test]
    fn orthonormality_with_64_nodes() {
        let q = QuadratureRule::gauss_hermite(64).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let ip = q.expect(|z| eval_hermite(i, z) * eval_hermite(j, z));
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() <= 1e-8, "<h{i},h{j}> = {ip}");
            }
        }
    }

    #[test]
    fn derivative_identity_by_central_differences() {
        let step = 1e-5;
        for j in 1..=10 {
            for k in 0..=80 {
                let z = -4.0 + 0.1 * k as f64;
                let fd = (eval_hermite(j, z + step) - eval_hermite(j, z - step)) / (2.0 * step);
                let exact = (j as f64).sqrt() * eval_hermite(j - 1, z);
                assert!((fd - exact).abs() <= 1e-7, "j={j} z={z}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn projection_of_basis_function() {
        let s = project_to_series(|z| eval_hermite(3, z), 5, &gh128()).unwrap();
        for (j, a) in s.coeffs().iter().enumerate() {
            let target = if j == 3 { 1.0 } else { 0.0 };
            assert!((a - target).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_square() {
        // brute-force oracle: z² = h_0 + √2 h_2
        let s = project_to_series(|z| z * z, 4, &gh128()).unwrap();
        let expect = [1.0, 0.0, 2f64.sqrt(), 0.0, 0.0];
        for (a, e) in s.coeffs().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn projection_of_relu_low_order() {
        let q = QuadratureRule::piecewise_default(&[0.0]);
        let s = project_to_series(|z| z.max(0.0), 1, &q).unwrap();
        assert!((s.coeff(0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((s.coeff(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_coarse_rule() {
        let q = QuadratureRule::gauss_hermite(4).unwrap();
        assert!(matches!(
            project_to_series(|z| z, 8, &q),
            Err(Error::InsufficientQuadrature { .. })
        ));
    }

    #[test]
    fn relu_closed_form_matches_quadrature() {
        let closed = relu_coeffs_closed_form(20);
        assert!((closed.coeff(0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(closed.coeff(1), 0.5);
        assert_eq!(closed.coeff(3), 0.0);
        let q = QuadratureRule::piecewise_default(&[0.0]);
        let quad = project_to_series(|z| z.max(0.0), 20, &q).unwrap();
        for j in 0..=20 {
            assert!(
                (closed.coeff(j) - quad.coeff(j)).abs() <= 1e-8,
                "j={j}: {} vs {}",
                closed.coeff(j),
                quad.coeff(j)
            );
        }
        // j = 2 from E[max(0,z)(z²-1)/√2] = 1/(2√π)
        assert!((closed.coeff(2) - 0.5 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn relu_coefficients_decay_like_j_to_minus_five_quarters() {
        // |α_j| j^{5/4} tends to (2/π)^{1/4} / √(2π) along even j
        let s = relu_coeffs_closed_form(400);
        let limit = (2.0 / PI).powf(0.25) / (2.0 * PI).sqrt();
        let scaled = |j: usize| s.coeff(j).abs() * (j as f64).powf(1.25);
        assert!((scaled(400) - limit).abs() / limit < 0.01);
        assert!((scaled(200) - limit).abs() > (scaled(400) - limit).abs());
    }

    #[test]
    fn ou_examples_and_semigroup() {
        let s = HermiteSeries::new(vec![0.3, -0.2, 1.0, 0.5]).unwrap();
        assert_eq!(s.ou_transform(1.0).unwrap(), s);
        let only2 = HermiteSeries::basis(2, 4);
        assert_eq!(only2.ou_transform(0.5).unwrap().coeff(2), 0.25);
        let zero = s.ou_transform(0.0).unwrap();
        assert_eq!(zero.coeffs(), &[0.3, 0.0, 0.0, 0.0]);
        assert!(s.ou_transform(1.5).is_err());
    }

    #[test]
    fn information_exponent_examples() {
        assert_eq!(HermiteSeries::basis(3, 6).information_exponent(1e-8).unwrap(), 3);
        let mut c = vec![0.0; 6];
        c[2] = 1.0;
        c[5] = 0.1;
        assert_eq!(HermiteSeries::new(c).unwrap().information_exponent(1e-8).unwrap(), 2);
        let relu = relu_coeffs_closed_form(16);
        let centered = relu.strip_low_order(1).unwrap();
        assert_eq!(centered.information_exponent(1e-8).unwrap(), 1);
        assert!(matches!(
            HermiteSeries::basis(0, 4).information_exponent(1e-8),
            Err(Error::NoNonzeroCoefficient { .. })
        ));
    }

    #[test]
    fn strip_examples() {
        let h2 = HermiteSeries::basis(2, 5);
        assert_eq!(h2.strip_low_order(2).unwrap(), h2);
        let s = HermiteSeries::new(vec![0.0, 3.0, 4.0]).unwrap();
        let c = s.strip_low_order(1).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-15);
        assert!((c.coeff(1) - 0.6).abs() < 1e-15);
        assert!(matches!(h2.strip_low_order(3), Err(Error::ZeroTail(3))));
    }

    #[test]
    fn derivative_norm_examples() {
        let (a, b, c) = HermiteSeries::basis(1, 3).derivative_norms();
        assert_eq!((a, b, c), (1.0, 1.0, 0.0));
        let (a, b, c) = HermiteSeries::basis(2, 3).derivative_norms();
        assert!((a - 1.0).abs() < 1e-15 && (b - 2f64.sqrt()).abs() < 1e-15 && (c - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(HermiteSeries::zeros(4).derivative_norms(), (0.0, 0.0, 0.0));

        // cross-check h_2 by quadrature of explicit derivatives: h_2' = √2 z, h_2'' = √2
        let q = gh128();
        let d1 = q.expect(|z| 2.0 * z * z).sqrt();
        let d2 = q.expect(|_| 2.0).sqrt();
        assert!((d1 - 2f64.sqrt()).abs() < 1e-12 && (d2 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn derivative_series_shape() {
        let s = HermiteSeries::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = s.derivative();
        assert_eq!(d.order(), 2);
        assert_eq!(d.coeffs(), &[2.0, 2f64.sqrt() * 3.0, 3f64.sqrt() * 4.0]);
        // mixed sum equals ‖f⁽⁴⁾‖² + 4‖f⁽³⁾‖² + 2‖f⁽²⁾‖²
        let s = HermiteSeries::new((0..12).map(|j| 1.0 / (1.0 + j as f64)).collect()).unwrap();
        let d2 = s.derivative().derivative();
        let d3 = d2.derivative();
        let d4 = d3.derivative();
        let rhs = d4.norm_sq() + 4.0 * d3.norm_sq() + 2.0 * d2.norm_sq();
        assert!((s.mixed_fourth_sum() - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let s = HermiteSeries::new(vec![0.5, -1.0]).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"coeffs":[0.5,-1.0],"truncation_order":1}"#);
        assert_eq!(serde_json::from_str::<HermiteSeries>(&j).unwrap(), s);
        assert!(serde_json::from_str::<HermiteSeries>(r#"{"coeffs":[1.0],"truncation_order":3}"#).is_err());
    }

    #[test]
    fn tail_estimate_for_relu() {
        let full = relu_coeffs_closed_form(2000);
        let trunc = full.with_order(64);
        let true_tail: f64 = full.coeffs()[65..].iter().map(|a| a * a).sum();
        let est = trunc.estimated_tail_mass();
        // the truncated tail beyond 2000 is ~1e-5 of the tail beyond 64
        assert!((est / true_tail - 1.0).abs() < 0.25, "{est} vs {true_tail}");
        assert_eq!(HermiteSeries::basis(2, 64).estimated_tail_mass(), 0.0);
    }
}
