//! The bias-averaged kernel `κ(u, v) = E_{b, ε}[φ(εu - b) φ(εv - b)]`, its
//! random-feature estimate, an RKHS norm upper bound and the
//! degrees-of-freedom estimate.

use nalgebra::{DMatrix, DVector};

use super::operator::relu_feature_hermite;
use super::{Activation, FeatureBank};
use crate::error::{Error, Result};
use crate::hermite::{gauss_legendre, gaussian_pdf, project_to_series, HermiteSeries, QuadratureRule, PIECEWISE_RANGE};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 1.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tau = {tau} must exceed 1")))
    }
}

/// Population kernel by quadrature over `b = τ s`, `s ~ N(0, 1)`.
///
/// The rule is split at the kinks `s = ±u/τ, ±v/τ` so ReLU is integrated
/// exactly up to floating point.
pub fn kernel(tau: f64, activation: Activation, u: f64, v: f64) -> Result<f64> {
    check_tau(tau)?;
    activation.validate()?;
    let (su, sv) = (u / tau, v / tau);
    if !(su.abs() < PIECEWISE_RANGE && sv.abs() < PIECEWISE_RANGE) {
        return Err(Error::QuadratureRange { u, v, range: PIECEWISE_RANGE * tau });
    }
    let q = QuadratureRule::piecewise_default(&[su, -su, sv, -sv]);
    Ok(q.expect(|s| {
        let b = tau * s;
        0.5 * (activation.value(u - b) * activation.value(v - b)
            + activation.value(-u - b) * activation.value(-v - b))
    }))
}

/// Closed-form ReLU kernel.
///
/// With `b = -τz`, `φ(u - b) = τ max(0, z + u/τ)`, so each sign reduces to a
/// shifted-ReLU product under the standard Gaussian.
pub fn kernel_closed_form(tau: f64, u: f64, v: f64) -> Result<f64> {
    check_tau(tau)?;
    let plus = super::operator::relu_pair_inner(-u / tau, 1.0, -v / tau, 1.0);
    let minus = super::operator::relu_pair_inner(u / tau, 1.0, v / tau, 1.0);
    Ok(0.5 * tau * tau * (plus + minus))
}

/// `κ̂(u, v) = Φ(u)ᵀΦ(v)`.
pub fn empirical_kernel(bank: &FeatureBank, u: f64, v: f64) -> f64 {
    let a = bank.phi(u);
    let b = bank.phi(v);
    a.iter().zip(&b).map(|(x, y)| x * y).sum()
}

/// Composite Gauss–Legendre rule on a finite interval, for unweighted
/// integrals such as `∫|f''|² / γ_τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRule {
    pub lo: f64,
    pub hi: f64,
    pub panels: usize,
    pub order: usize,
}

impl IntervalRule {
    pub fn new(lo: f64, hi: f64, panels: usize, order: usize) -> Result<Self> {
        if !(lo < hi) || panels == 0 || order == 0 {
            return Err(Error::InvalidParameter(format!(
                "interval rule needs lo < hi and positive sizes, got [{lo}, {hi}] x {panels} x {order}"
            )));
        }
        Ok(Self { lo, hi, panels, order })
    }

    /// Same interval with twice as many panels.
    pub fn refined(&self) -> Self {
        Self { panels: self.panels * 2, ..self.clone() }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (x, w) = gauss_legendre(self.order);
        let h = (self.hi - self.lo) / self.panels as f64;
        let mut total = 0.0;
        for p in 0..self.panels {
            let mid = self.lo + (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                total += wi * 0.5 * h * f(mid + 0.5 * h * xi);
            }
        }
        total
    }
}

/// Relative size of the boundary integrand tolerated by [`rkhs_norm_bound`].
pub const TAIL_DECAY_TOL: f64 = 1e-10;

/// Upper bound on `‖f‖²_H`:
/// `6τ (∫|f''|²/γ_τ + ‖f‖² + 6‖f'‖² + 2⟨f, f''⟩)`.
///
/// The Gaussian-side terms come from the series; the weighted integral uses
/// `f_second` on `rule`. If the weighted integrand is not negligible at both
/// ends of the interval the integral is reported as divergent.
pub fn rkhs_norm_bound(
    series: &HermiteSeries,
    f_second: impl Fn(f64) -> f64,
    tau: f64,
    rule: &IntervalRule,
) -> Result<f64> {
    check_tau(tau)?;
    let gamma_tau = |t: f64| gaussian_pdf(t / tau) / tau;
    let weighted = |t: f64| f_second(t).powi(2) / gamma_tau(t);
    let integral = rule.integrate(weighted);
    let edge = weighted(rule.lo).abs().max(weighted(rule.hi).abs());
    if !edge.is_finite() || edge > TAIL_DECAY_TOL * integral.abs().max(1.0) {
        return Err(Error::Divergent(edge));
    }
    let d1 = series.derivative();
    let d2 = d1.derivative();
    let f_f2: f64 = series.coeffs().iter().zip(d2.coeffs()).map(|(a, b)| a * b).sum();
    Ok(6.0 * tau * (integral + series.norm_sq() + 6.0 * d1.norm_sq() + 2.0 * f_f2))
}

/// Hermite coefficients `⟨h_j, φ(ε · - b)⟩_γ`, `j = 0..=order`.
pub fn feature_hermite(activation: Activation, order: usize, b: f64, eps: f64) -> Result<Vec<f64>> {
    match activation {
        Activation::Relu => {
            let mut out = Vec::new();
            relu_feature_hermite(order, b, eps, &mut out);
            Ok(out)
        }
        Activation::SmoothedRelu { .. } => {
            let q = QuadratureRule::piecewise_default(&[]);
            let s = project_to_series(|z| activation.value(eps * z - b), order, &q)?;
            Ok(s.coeffs().to_vec())
        }
    }
}

/// Nodes used for the expectation over `b` in [`degrees_of_freedom_sup`].
pub const DOF_BIAS_NODES: usize = 96;

/// `sup_{b ∈ grid, ε} ⟨Pφ_b^ε, (PΣP + λI)^{-1} Pφ_b^ε⟩` on the basis
/// `h_1..h_J`, where `Σ = E_{b,ε}[φ_b^ε ⊗ φ_b^ε]` and `P` drops `h_0`.
pub fn degrees_of_freedom_sup(
    tau: f64,
    activation: Activation,
    order: usize,
    lambda: f64,
    b_grid: &[f64],
) -> Result<f64> {
    check_tau(tau)?;
    activation.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be > 0")));
    }
    if order == 0 || b_grid.is_empty() {
        return Err(Error::InvalidParameter("need order >= 1 and a nonempty b grid".into()));
    }
    let gh = QuadratureRule::gauss_hermite(DOF_BIAS_NODES)?;
    let mut sigma = DMatrix::<f64>::zeros(order, order);
    for (&z, &w) in gh.nodes().iter().zip(gh.weights()) {
        for eps in [1.0, -1.0] {
            let e = feature_hermite(activation, order, tau * z, eps)?;
            let v = DVector::from_column_slice(&e[1..]);
            sigma.ger(0.5 * w, &v, &v, 1.0);
        }
    }
    for i in 0..order {
        sigma[(i, i)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(sigma).ok_or(Error::NotPositiveDefinite)?;
    let mut best = 0.0_f64;
    for &b in b_grid {
        for eps in [1.0, -1.0] {
            let e = feature_hermite(activation, order, b, eps)?;
            let v = DVector::from_column_slice(&e[1..]);
            best = best.max(v.dot(&chol.solve(&v)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_bank;

    #[test]
    fn quadrature_kernel_matches_closed_form() {
        for (u, v) in [(0.0, 0.0), (0.5, -0.3), (2.0, 1.0), (-3.0, 4.0), (10.0, -10.0)] {
            let q = kernel(2.0, Activation::Relu, u, v).unwrap();
            let c = kernel_closed_form(2.0, u, v).unwrap();
            assert!((q - c).abs() < 1e-11 * c.abs().max(1.0), "({u},{v}): {q} vs {c}");
            let sym = kernel(2.0, Activation::Relu, v, u).unwrap();
            assert!((q - sym).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_at_origin() {
        // E[max(0, -b)²] = τ²/2
        let k = kernel_closed_form(2.0, 0.0, 0.0).unwrap();
        assert!((k - 2.0).abs() < 1e-13);
    }

    #[test]
    fn kernel_range_check() {
        assert!(matches!(
            kernel(2.0, Activation::Relu, 100.0, 0.0),
            Err(Error::QuadratureRange { .. })
        ));
        assert!(kernel(1.0, Activation::Relu, 0.0, 0.0).is_err());
    }

    #[test]
    fn empirical_kernel_concentrates() {
        let bank = sample_bank(100_000, 2.0, 11, Activation::Relu).unwrap();
        let k = kernel_closed_form(2.0, 0.5, -0.3).unwrap();
        let e = empirical_kernel(&bank, 0.5, -0.3);
        assert!((k - e).abs() < 3.0 * k / (1e5_f64).sqrt() * 4.0, "{k} vs {e}");
    }

    fn bump(t: f64) -> f64 {
        if t.abs() < 1.0 {
            (-1.0 / (1.0 - t * t)).exp()
        } else {
            0.0
        }
    }

    fn bump_second(t: f64) -> f64 {
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - t * t;
        // d/dt e^{-1/u} = -2t/u² e^{-1/u}
        let f = (-1.0 / u).exp();
        f * (6.0 * t.powi(4) - 2.0) / u.powi(4)
    }

    #[test]
    fn bump_second_derivative_by_differences() {
        for t in [-0.7, -0.2, 0.1, 0.5, 0.8] {
            let h = 1e-4;
            let fd = (bump(t + h) - 2.0 * bump(t) + bump(t - h)) / (h * h);
            assert!((fd - bump_second(t)).abs() < 1e-5 * bump_second(t).abs().max(1.0));
        }
    }

    #[test]
    fn rkhs_bound_for_bump_is_stable() {
        let q = QuadratureRule::piecewise(&[-1.0, 1.0], PIECEWISE_RANGE, 0.05, 20).unwrap();
        let series = project_to_series(bump, 64, &q).unwrap();
        let rule = IntervalRule::new(-1.0, 1.0, 64, 16).unwrap();
        let a = rkhs_norm_bound(&series, bump_second, 2.0, &rule).unwrap();
        let b = rkhs_norm_bound(&series, bump_second, 2.0, &rule.refined()).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!(((a - b) / b).abs() < 1e-4);
        let zero = rkhs_norm_bound(&HermiteSeries::zeros(10), |_| 0.0, 2.0, &rule).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn rkhs_bound_reports_divergence() {
        // h_2'' = √2 is constant, so |f''|²/γ_τ grows without bound
        let rule = IntervalRule::new(-30.0, 30.0, 60, 16).unwrap();
        let r = rkhs_norm_bound(&HermiteSeries::basis(2, 8), |_| 2.0_f64.sqrt(), 2.0, &rule);
        assert!(matches!(r, Err(Error::Divergent(_))));
    }

    #[test]
    fn dof_is_below_trivial_bound_and_scales() {
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
        let small = degrees_of_freedom_sup(2.0, Activation::Relu, 32, 0.1, &grid).unwrap();
        let large = degrees_of_freedom_sup(2.0, Activation::Relu, 32, 0.01, &grid).unwrap();
        assert!(small > 0.0 && large > small);
        // d ≤ ‖Pφ_b‖² / λ and ‖Pφ_b‖² ≤ E[φ(z - b)²] ≤ 1 + b² for |b| ≤ 5
        assert!(small <= 26.0 / 0.1);
        assert!(large * 0.01 <= 26.0);
    }
}
