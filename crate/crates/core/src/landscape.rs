//! Exact population landscape in `(c, m)` and empirical deviation probes.
//!
//! For a unit-norm teacher with coefficients `α_j` and `m = ⟨θ, θ*⟩`,
//! `L(c, m) = 1 + σ² + cᵀQ_λc - 2⟨c, T g_m⟩` with `g_m = Σ α_j m^j h_j`.
//! Minimizing in `c` gives `L̄(m) = 1 + σ² - (Tg_m)ᵀ Q_λ^{-1} (Tg_m)`.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::datagen::{random_unit, sample_dataset_stream, Stream, TeacherSpec};
use crate::error::{Error, Result};
use crate::features::{FeatureBank, FeatureOperator};
use crate::hermite::{HermiteSeries, DEFAULT_NONZERO_TOL};
use crate::model::{loss_and_grads, ModelState};
use crate::stats;
use crate::util::{self, streams};

/// Default number of points in an `m`-grid.
pub const DEFAULT_GRID: usize = 201;

/// Teacher coefficients plus a feature operator.
#[derive(Debug, Clone)]
pub struct PopulationOracle {
    series: HermiteSeries,
    op: FeatureOperator,
    sigma2: f64,
}

fn check_m(m: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(Error::CorrelationOutOfRange(m))
    }
}

/// Outcome of [`PopulationOracle::classify_near_critical`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Equator,
    Pole,
    Interior,
}

impl PopulationOracle {
    /// The series is truncated or zero-padded to the operator's order.
    pub fn new(series: &HermiteSeries, op: FeatureOperator, sigma: f64) -> Result<Self> {
        if !(op.lambda() > 0.0) {
            return Err(Error::InvalidParameter("population oracle needs lambda > 0".into()));
        }
        Ok(Self { series: series.with_order(op.order()), op, sigma2: sigma * sigma })
    }

    pub fn series(&self) -> &HermiteSeries {
        &self.series
    }

    pub fn operator(&self) -> &FeatureOperator {
        &self.op
    }

    pub fn lambda(&self) -> f64 {
        self.op.lambda()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Coefficients of `g_m = U_m f*`.
    pub fn g_m(&self, m: f64) -> HermiteSeries {
        let c = self.series.coeffs().iter().enumerate().map(|(j, a)| a * m.powi(j as i32)).collect();
        HermiteSeries::new(c).expect("finite coefficients")
    }

    /// Coefficients of `ḡ_m = Σ α_j j m^{j-1} h_j = d g_m / dm`.
    pub fn g_bar_m(&self, m: f64) -> HermiteSeries {
        let c = self
            .series
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, a)| if j == 0 { 0.0 } else { a * j as f64 * m.powi(j as i32 - 1) })
            .collect();
        HermiteSeries::new(c).expect("finite coefficients")
    }

    /// `L(c, m)`.
    pub fn population_loss(&self, c: &[f64], m: f64) -> Result<f64> {
        check_m(m)?;
        let c = self.vector(c)?;
        let tg = self.op.apply(&self.g_m(m));
        let qc = self.op.gram() * &c;
        Ok(1.0 + self.sigma2 + c.dot(&qc) + self.lambda() * c.norm_squared() - 2.0 * c.dot(&tg))
    }

    /// `(L̄(m), c_opt(m))` with `c_opt = Q_λ^{-1} T g_m`.
    pub fn projected_population_loss(&self, m: f64) -> Result<(f64, DVector<f64>)> {
        check_m(m)?;
        let tg = self.op.apply(&self.g_m(m));
        let c = self.op.solve(&tg)?;
        Ok((1.0 + self.sigma2 - tg.dot(&c), c))
    }

    /// `-Σ α_j² j m^{2j-1} + ⟨(I - P̂_λ) g_m, ḡ_m⟩`, which reduces to
    /// `-c_optᵀ T ḡ_m`. Its sign is that of `dL̄/dm = 2R`.
    pub fn critical_residual(&self, m: f64) -> Result<f64> {
        check_m(m)?;
        let (_, c) = self.projected_population_loss(m)?;
        let g = self.g_m(m);
        let gb = self.g_bar_m(m);
        let direct = -self
            .series
            .coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, a)| a * a * j as f64 * m.powi(2 * j as i32 - 1))
            .sum::<f64>();
        Ok(direct + g.dot(&gb) - c.dot(&self.op.apply(&gb)))
    }

    /// `(∇_c L, ρ)` where `∇_θ L = ρ θ*` and `ρ = -2 Σ_j ⟨T_j, c⟩ j α_j m^{j-1}`.
    pub fn population_grads(&self, c: &[f64], m: f64) -> Result<(DVector<f64>, f64)> {
        check_m(m)?;
        let cv = self.vector(c)?;
        let tg = self.op.apply(&self.g_m(m));
        let grad_c = (self.op.reg_gram() * &cv - tg) * 2.0;
        let coef = -2.0 * cv.dot(&self.op.apply(&self.g_bar_m(m)));
        Ok((grad_c, coef))
    }

    /// Population spherical gradient `ρ (θ* - mθ)` at direction `θ`.
    pub fn spherical_theta_grad(&self, c: &[f64], theta: &[f64], theta_star: &[f64]) -> Result<Vec<f64>> {
        let m = util::dot(theta, theta_star).clamp(-1.0, 1.0);
        let (_, coef) = self.population_grads(c, m)?;
        Ok(theta_star.iter().zip(theta).map(|(s, t)| coef * (s - m * t)).collect())
    }

    /// Classify an approximately stationary point.
    ///
    /// Interior when either gradient exceeds `eps`. Otherwise the pole test
    /// `1 - |m| ≤ (2^{2s-1} / (s α_s²))² ε²` is tried before the equator test
    /// `|m| ≤ (2ε / (s α_s²))^{1/(2s-1)}`; failing both is reported.
    pub fn classify_near_critical(&self, c: &[f64], m: f64, eps: f64) -> Result<Criticality> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be > 0")));
        }
        let (gc, coef) = self.population_grads(c, m)?;
        let grad_theta = coef.abs() * (1.0 - m * m).max(0.0).sqrt();
        let grad_c = gc.norm();
        if grad_c > eps || grad_theta > eps {
            return Ok(Criticality::Interior);
        }
        let s = self.series.information_exponent(DEFAULT_NONZERO_TOL)?;
        let a2 = self.series.coeff(s).powi(2);
        let sf = s as f64;
        let pole = (2f64.powi(2 * s as i32 - 1) / (sf * a2)).powi(2) * eps * eps;
        let equator = (2.0 * eps / (sf * a2)).powf(1.0 / (2.0 * sf - 1.0));
        if 1.0 - m.abs() <= pole {
            Ok(Criticality::Pole)
        } else if m.abs() <= equator {
            Ok(Criticality::Equator)
        } else {
            Err(Error::TheoryViolation { m, grad_c, grad_theta })
        }
    }

    /// `Σ_j j² α_j² |m|^{2j-1}`, the scale against which residuals are compared.
    pub fn residual_envelope(&self, m: f64) -> f64 {
        self.series
            .coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, a)| (j * j) as f64 * a * a * m.abs().powi(2 * j as i32 - 1))
            .sum()
    }

    /// `|R(m)| / (λ^{β/2} Σ_j j² α_j² |m|^{2j-1})`, the constant that makes the
    /// residual bound tight at `m`.
    pub fn residual_constant(&self, m: f64, beta: f64) -> Result<f64> {
        let r = self.critical_residual(m)?;
        Ok(r.abs() / (self.lambda().powf(beta / 2.0) * self.residual_envelope(m)))
    }

    /// Whether `L̄` strictly decreases in `|m|` on a `points`-grid of `[0, 1]`
    /// and its mirror.
    pub fn is_monotone(&self, points: usize) -> Result<bool> {
        let grid = uniform_grid(0.0, 1.0, points.max(2));
        for sign in [1.0, -1.0] {
            let mut prev = f64::INFINITY;
            for &m in &grid {
                let (l, _) = self.projected_population_loss(sign * m)?;
                if !(l < prev) {
                    return Ok(false);
                }
                prev = l;
            }
        }
        Ok(true)
    }

    /// The first `λ` in `lambdas` (in the given order) at which
    /// [`is_monotone`](Self::is_monotone) fails, if any.
    pub fn monotonicity_break(&self, lambdas: &[f64], points: usize) -> Result<Option<f64>> {
        for &lambda in lambdas {
            let o = Self { op: self.op.with_lambda(lambda)?, ..self.clone() };
            if !o.is_monotone(points)? {
                return Ok(Some(lambda));
            }
        }
        Ok(None)
    }

    fn vector(&self, c: &[f64]) -> Result<DVector<f64>> {
        if c.len() != self.op.n_features() {
            return Err(Error::DimensionMismatch { expected: self.op.n_features(), found: c.len() });
        }
        Ok(DVector::from_column_slice(c))
    }

    /// Evaluate the landscape on a grid of `m` values.
    pub fn scan(&self, grid: &[f64]) -> Result<Vec<ScanRow>> {
        grid.iter()
            .map(|&m| {
                let (loss, _) = self.projected_population_loss(m)?;
                let residual = self.critical_residual(m)?;
                Ok(ScanRow { m, loss, residual, grad_theta: (2.0 * residual).abs() * (1.0 - m * m).max(0.0).sqrt() })
            })
            .collect()
    }

    /// Roots of the critical residual in `(lo, hi)` by bisection on the sign
    /// changes of a `points`-grid.
    pub fn residual_roots(&self, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
        let grid = uniform_grid(lo, hi, points.max(2));
        let vals = grid.iter().map(|&m| self.critical_residual(m)).collect::<Result<Vec<_>>>()?;
        let mut roots = Vec::new();
        for i in 0..grid.len() - 1 {
            let (mut a, mut b) = (grid[i], grid[i + 1]);
            let (mut fa, fb) = (vals[i], vals[i + 1]);
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa * fb >= 0.0 {
                continue;
            }
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                let fm = self.critical_residual(mid)?;
                if fm == 0.0 || (b - a) < 1e-14 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        Ok(roots)
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// One row of a landscape scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub m: f64,
    /// `L̄(m)`.
    pub loss: f64,
    pub residual: f64,
    /// Spherical gradient magnitude at `(c_opt(m), m)`.
    pub grad_theta: f64,
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["m", "loss", "residual", "grad_theta"])?;
    for r in rows {
        w.write_record([r.m.to_string(), r.loss.to_string(), r.residual.to_string(), r.grad_theta.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest observed gradient deviations at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub max_dev_c: f64,
    pub max_dev_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub rows: Vec<ProbeRow>,
    pub slope_c: f64,
    pub slope_theta: f64,
}

/// Compare empirical and population gradients at `sample_count` random
/// states with `‖c‖ = r`, for each sample size in `ns`.
///
/// The states are shared across sample sizes; each size draws its own
/// dataset from the probe stream of `seed`.
pub fn deviation_probe(
    oracle: &PopulationOracle,
    bank: &FeatureBank,
    teacher: &TeacherSpec,
    ns: &[usize],
    sample_count: usize,
    r: f64,
    seed: u64,
) -> Result<ProbeSummary> {
    if sample_count == 0 || ns.is_empty() {
        return Err(Error::InvalidParameter("need at least one probe and one sample size".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius r = {r} must be >= 0")));
    }
    let d = teacher.dim();
    let mut rng = util::rng(seed, streams::PROBE_STATES);
    let states: Vec<ModelState> = (0..sample_count)
        .map(|_| {
            let theta = random_unit(d, &mut rng);
            let c = random_unit(bank.len(), &mut rng).into_iter().map(|v| v * r).collect();
            ModelState { c, theta }
        })
        .collect();
    let lambda = oracle.lambda();
    let mut rows = Vec::with_capacity(ns.len());
    for (k, &n) in ns.iter().enumerate() {
        let data = sample_dataset_stream(teacher, n, d, seed.wrapping_add(k as u64), Stream::Probe)?;
        let (mut dc, mut dt) = (0.0_f64, 0.0_f64);
        for s in &states {
            let emp = loss_and_grads(s, bank, &data, lambda)?;
            let m = s.overlap(teacher.theta_star());
            let (pc, _) = oracle.population_grads(&s.c, m)?;
            let pt = oracle.spherical_theta_grad(&s.c, &s.theta, teacher.theta_star())?;
            let et = emp.grad_theta_spherical(&s.theta);
            let dev_c = emp.grad_c.iter().zip(pc.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dev_t = et.iter().zip(&pt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            dc = dc.max(dev_c);
            dt = dt.max(dev_t);
        }
        rows.push(ProbeRow { n, max_dev_c: dc, max_dev_theta: dt });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let (slope_c, slope_theta) = if rows.len() >= 2 {
        (
            stats::loglog_slope(&xs, &rows.iter().map(|r| r.max_dev_c).collect::<Vec<_>>()),
            stats::loglog_slope(&xs, &rows.iter().map(|r| r.max_dev_theta).collect::<Vec<_>>()),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ProbeSummary { rows, slope_c, slope_theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_bank, Activation};
    use crate::hermite::relu_coeffs_closed_form;

    fn centered_relu(order: usize) -> HermiteSeries {
        relu_coeffs_closed_form(order).strip_low_order(1).unwrap()
    }

    fn oracle(n: usize, lambda: f64) -> PopulationOracle {
        let bank = sample_bank(n, 2.0, 3, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 64, lambda).unwrap();
        PopulationOracle::new(&centered_relu(64), op, 0.01).unwrap()
    }

    #[test]
    fn trivial_values() {
        let o = oracle(40, 0.01);
        let zero = vec![0.0; 40];
        for m in [-0.5, 0.0, 0.7] {
            assert!((o.population_loss(&zero, m).unwrap() - 1.0001).abs() < 1e-14);
        }
        let (l, c) = o.projected_population_loss(0.0).unwrap();
        assert!((l - 1.0001).abs() < 1e-14);
        assert_eq!(c.norm(), 0.0);
        assert_eq!(o.critical_residual(0.0).unwrap(), 0.0);
        assert!(o.population_loss(&zero, 1.5).is_err());
        assert!(o.projected_population_loss(-1.01).is_err());
    }

    #[test]
    fn minimizer_and_derivative_identities() {
        let o = oracle(60, 0.01);
        for m in [-0.8, -0.3, 0.2, 0.5, 0.9] {
            let (l, c) = o.projected_population_loss(m).unwrap();
            let (gc, _) = o.population_grads(c.as_slice(), m).unwrap();
            assert!(gc.norm() < 1e-10);
            assert!((o.population_loss(c.as_slice(), m).unwrap() - l).abs() < 1e-12);
            let h = 1e-4;
            let d = (o.projected_population_loss(m + h).unwrap().0 - o.projected_population_loss(m - h).unwrap().0)
                / (2.0 * h);
            let r = o.critical_residual(m).unwrap();
            assert!((d - 2.0 * r).abs() < 1e-6, "m={m}: {d} vs {}", 2.0 * r);
        }
    }

    #[test]
    fn grad_coefficient_matches_difference_in_m() {
        let o = oracle(30, 0.05);
        let c: Vec<f64> = (0..30).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        for m in [-0.6, 0.1, 0.4] {
            let (_, coef) = o.population_grads(&c, m).unwrap();
            let h = 1e-5;
            let fd = (o.population_loss(&c, m + h).unwrap() - o.population_loss(&c, m - h).unwrap()) / (2.0 * h);
            assert!((fd - coef).abs() < 1e-7 * coef.abs().max(1.0));
        }
    }

    #[test]
    fn even_teacher_is_symmetric() {
        let bank = sample_bank(30, 2.0, 3, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 32, 0.01).unwrap();
        let mut coeffs = vec![0.0; 33];
        coeffs[2] = 0.8;
        coeffs[4] = 0.6;
        let o = PopulationOracle::new(&HermiteSeries::new(coeffs).unwrap(), op, 0.0).unwrap();
        for m in [0.2, 0.55, 0.9] {
            let a = o.projected_population_loss(m).unwrap().0;
            let b = o.projected_population_loss(-m).unwrap().0;
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn classification_examples() {
        let o = oracle(80, 0.01);
        let (_, c1) = o.projected_population_loss(1.0).unwrap();
        assert_eq!(o.classify_near_critical(c1.as_slice(), 1.0, 1e-3).unwrap(), Criticality::Pole);
        let zero = vec![0.0; 80];
        assert_eq!(o.classify_near_critical(&zero, 0.0, 1e-3).unwrap(), Criticality::Equator);
        assert_eq!(o.classify_near_critical(&zero, 0.5, 1e-3).unwrap(), Criticality::Interior);
        // a huge ridge flattens the landscape, so an interior m looks stationary
        let flat = PopulationOracle::new(o.series(), o.operator().with_lambda(1e4).unwrap(), 0.0).unwrap();
        let (_, c) = flat.projected_population_loss(0.6).unwrap();
        let r = flat.classify_near_critical(c.as_slice(), 0.6, 1e-3);
        assert!(matches!(r, Err(Error::TheoryViolation { .. })), "{r:?}");
    }

    #[test]
    fn roots_by_bisection() {
        let o = oracle(50, 0.01);
        let roots = o.residual_roots(-0.5, 0.5, 10).unwrap();
        assert!(roots.iter().any(|r| r.abs() < 1e-10), "{roots:?}");
        let grid = uniform_grid(-1.0, 1.0, DEFAULT_GRID);
        assert_eq!(grid.len(), 201);
        assert_eq!(grid[100], 0.0);
    }

    #[test]
    fn scan_csv_rows() {
        let o = oracle(20, 0.01);
        let rows = o.scan(&uniform_grid(-1.0, 1.0, 11)).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 12);
        assert_eq!(rows[0].grad_theta, 0.0);
    }
}
