//! The feature-to-Hermite operator `T`, Gram matrix `Q = T T*` and the
//! regularized projection `P̂_λ`.
//!
//! Column `j` of [`FeatureOperator::t_matrix`] is `T_j = T h_j ∈ R^N`, entry
//! `i` equal to `⟨h_j, φ(ε_i · - b_i)⟩_γ / √N`. `Q_ik = ⟨φ_i, φ_k⟩_γ / N` is
//! computed independently of the truncation, so `Q ≠ Σ_j T_j T_jᵀ` beyond
//! the truncation error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{Activation, FeatureBank};
use crate::error::{Error, Result};
use crate::hermite::{gaussian_pdf, hermite_values_into, HermiteSeries, QuadratureRule};
use crate::util;

/// Tolerance on negative Gram eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// How the Gaussian integrals defining `T` and `Q` are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    /// Exact expressions for shifted ReLU features (ReLU activation only).
    ClosedForm,
    /// Quadrature with the given rule; should resolve the feature kinks.
    Quadrature(QuadratureRule),
}

impl Backend {
    /// Closed form for ReLU, a kink-aligned piecewise rule otherwise.
    pub fn default_for(bank: &FeatureBank) -> Self {
        match bank.activation() {
            Activation::Relu => Backend::ClosedForm,
            Activation::SmoothedRelu { .. } => Backend::Quadrature(QuadratureRule::piecewise_default(&bank.kinks())),
        }
    }

    fn fingerprint(&self) -> u64 {
        match self {
            Backend::ClosedForm => 0,
            Backend::Quadrature(q) => q.fingerprint(),
        }
    }
}

/// `T_j` columns, `Q`, and a factorization of `Q_λ = Q + λI`.
#[derive(Debug, Clone)]
pub struct FeatureOperator {
    t: DMatrix<f64>,
    gram: DMatrix<f64>,
    lambda: f64,
    chol: Option<Cholesky<f64, Dyn>>,
}

/// Result of the regularized projection of a target onto the feature span.
#[derive(Debug, Clone)]
pub struct Projection {
    /// `c* = Q_λ^{-1} T f`.
    pub coeffs: DVector<f64>,
    /// `‖(I - P̂_λ) f‖²_γ`.
    pub residual_sq: f64,
}

/// Build `T` and `Q` by quadrature; see [`FeatureOperator::build`].
pub fn build_operator(bank: &FeatureBank, order: usize, lambda: f64, quad: &QuadratureRule) -> Result<FeatureOperator> {
    FeatureOperator::build(bank, order, lambda, &Backend::Quadrature(quad.clone()))
}

/// `c* = argmin ‖f - cᵀΦ‖²_γ + λ‖c‖²` for `f` given by its Hermite series.
pub fn regularized_projection(op: &FeatureOperator, series: &HermiteSeries) -> Result<Projection> {
    let tf = op.apply(series);
    op.project_target(&tf, series.norm_sq())
}

impl FeatureOperator {
    pub fn build(bank: &FeatureBank, order: usize, lambda: f64, backend: &Backend) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
        }
        let (t, gram) = match backend {
            Backend::ClosedForm => {
                if bank.activation() != Activation::Relu {
                    return Err(Error::InvalidParameter(
                        "closed-form backend only supports ReLU features".into(),
                    ));
                }
                closed_form_parts(bank, order)
            }
            Backend::Quadrature(q) => {
                if q.node_count() < order + 1 {
                    return Err(Error::InsufficientQuadrature {
                        nodes: q.node_count(),
                        required: order + 1,
                        order,
                    });
                }
                quadrature_parts(bank, order, q)
            }
        };
        check_psd(&gram)?;
        Self::from_parts(t, gram, lambda)
    }

    /// Default backend for the bank's activation.
    pub fn new(bank: &FeatureBank, order: usize, lambda: f64) -> Result<Self> {
        Self::build(bank, order, lambda, &Backend::default_for(bank))
    }

    fn from_parts(t: DMatrix<f64>, gram: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let chol = if lambda > 0.0 {
            let mut reg = gram.clone();
            for i in 0..reg.nrows() {
                reg[(i, i)] += lambda;
            }
            Some(Cholesky::new(reg).ok_or(Error::NotPositiveDefinite)?)
        } else {
            None
        };
        Ok(Self { t, gram, lambda, chol })
    }

    /// Same `T` and `Q` with a different ridge parameter.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
        }
        Self::from_parts(self.t.clone(), self.gram.clone(), lambda)
    }

    pub fn n_features(&self) -> usize {
        self.t.nrows()
    }

    pub fn order(&self) -> usize {
        self.t.ncols() - 1
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `N × (J+1)` matrix with columns `T_j`.
    pub fn t_matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn t_column(&self, j: usize) -> DVector<f64> {
        self.t.column(j).into_owned()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Q_λ = Q + λI`.
    pub fn reg_gram(&self) -> DMatrix<f64> {
        let mut m = self.gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.lambda;
        }
        m
    }

    /// `tr(Σ̂) = tr(Q)`.
    pub fn trace(&self) -> f64 {
        self.gram.trace()
    }

    /// `T f = Σ_j α_j T_j` (coefficients beyond the operator order are dropped).
    pub fn apply(&self, series: &HermiteSeries) -> DVector<f64> {
        let k = (series.order() + 1).min(self.t.ncols());
        let alpha = DVector::from_column_slice(&series.coeffs()[..k]);
        self.t.columns(0, k) * alpha
    }

    /// `Q_λ^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let chol = self
            .chol
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("Q_λ solve needs lambda > 0".into()))?;
        Ok(chol.solve(v))
    }

    /// Projection of a target given `T f` and `‖f‖²_γ` directly.
    ///
    /// `residual² = ‖f‖² - 2⟨c*, Tf⟩ + c*ᵀ Q c*`.
    pub fn project_target(&self, tf: &DVector<f64>, norm_sq: f64) -> Result<Projection> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter("regularized projection needs lambda > 0".into()));
        }
        let coeffs = self.solve(tf)?;
        let qc = &self.gram * &coeffs;
        let residual_sq = norm_sq - 2.0 * coeffs.dot(tf) + coeffs.dot(&qc);
        Ok(Projection { coeffs, residual_sq })
    }

    /// Cache key for `(bank, J, λ, backend)`.
    pub fn cache_key(bank: &FeatureBank, order: usize, lambda: f64, backend: &Backend) -> u64 {
        util::hash_f64s([
            f64::from_bits(bank.fingerprint()),
            order as f64,
            lambda,
            f64::from_bits(backend.fingerprint()),
        ])
    }

    /// Load a cached operator from `dir`, or build it and write the cache.
    pub fn load_or_build(
        dir: &Path,
        bank: &FeatureBank,
        order: usize,
        lambda: f64,
        backend: &Backend,
    ) -> Result<Self> {
        let key = Self::cache_key(bank, order, lambda, backend);
        let path = cache_path(dir, key);
        if path.exists() {
            if let Ok(op) = Self::read_binary(&path, key) {
                return Ok(op);
            }
        }
        let op = Self::build(bank, order, lambda, backend)?;
        std::fs::create_dir_all(dir)?;
        op.write_binary(&path, key)?;
        Ok(op)
    }

    /// Binary layout (little endian): magic `SIDXOP01`, key u64, N u64,
    /// J u64, λ f64, then `T` and `Q` in column-major f64.
    pub fn write_binary(&self, path: &Path, key: u64) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&key.to_le_bytes())?;
        w.write_all(&(self.n_features() as u64).to_le_bytes())?;
        w.write_all(&(self.order() as u64).to_le_bytes())?;
        w.write_all(&self.lambda.to_le_bytes())?;
        for v in self.t.iter().chain(self.gram.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path, expected_key: u64) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidParameter("not an operator cache file".into()));
        }
        let key = read_u64(&mut r)?;
        if key != expected_key {
            return Err(Error::InvalidParameter("operator cache key mismatch".into()));
        }
        let n = read_u64(&mut r)? as usize;
        let order = read_u64(&mut r)? as usize;
        let lambda = f64::from_bits(read_u64(&mut r)?);
        let mut read_vals = |count: usize| -> Result<Vec<f64>> {
            (0..count).map(|_| Ok(f64::from_bits(read_u64(&mut r)?))).collect()
        };
        let t = DMatrix::from_vec(n, order + 1, read_vals(n * (order + 1))?);
        let gram = DMatrix::from_vec(n, n, read_vals(n * n)?);
        Self::from_parts(t, gram, lambda)
    }
}

const MAGIC: &[u8; 8] = b"SIDXOP01";

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn cache_path(dir: &Path, key: u64) -> PathBuf {
    dir.join(format!("op-{key:016x}.bin"))
}

fn check_psd(gram: &DMatrix<f64>) -> Result<()> {
    let mut shifted = gram.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += PSD_TOLERANCE;
    }
    if Cholesky::new(shifted).is_some() {
        return Ok(());
    }
    let min = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        Err(Error::NegativeEigenvalue(min))
    } else {
        Ok(())
    }
}

/// `Φ̄(x) = 1 - Φ(x)`.
fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `⟨h_j, max(0, εz - b)⟩_γ` for `j = 0..=order`.
///
/// For `ε = +1`: `γ(b) - bΦ̄(b)`, `Φ̄(b)`, and `γ(b) h_{j-2}(b) / √(j(j-1))`
/// for `j ≥ 2` (Gaussian integration by parts); `ε = -1` flips odd indices.
pub fn relu_feature_hermite(order: usize, b: f64, eps: f64, out: &mut Vec<f64>) {
    let g = gaussian_pdf(b);
    let sf = normal_sf(b);
    let mut h = Vec::with_capacity(order + 1);
    if order >= 2 {
        hermite_values_into(order - 2, b, &mut h);
    }
    out.clear();
    for j in 0..=order {
        let v = match j {
            0 => g - b * sf,
            1 => sf,
            _ => {
                let jf = j as f64;
                g * h[j - 2] / (jf * (jf - 1.0)).sqrt()
            }
        };
        out.push(if eps < 0.0 && j % 2 == 1 { -v } else { v });
    }
}

/// `E_γ[max(0, z - a) max(0, z - b)]`.
fn relu_same_sign(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    (m - a - b) * gaussian_pdf(m) + (1.0 + a * b) * normal_sf(m)
}

/// `E_γ[max(0, z - a) max(0, -z - b)]`, supported on `a < z < -b`.
fn relu_opposite_sign(a: f64, b: f64) -> f64 {
    let c = -b;
    if a >= c {
        return 0.0;
    }
    let a0 = if a > 0.0 {
        normal_sf(a) - normal_sf(c)
    } else {
        normal_sf(-c) - normal_sf(-a)
    };
    let (ga, gc) = (gaussian_pdf(a), gaussian_pdf(c));
    let a1 = ga - gc;
    let a2 = a * ga - c * gc + a0;
    (-(a2 + (b - a) * a1 - a * b * a0)).max(0.0)
}

/// `E_γ[max(0, e1 z - b1) max(0, e2 z - b2)]` in closed form.
pub fn relu_pair_inner(b1: f64, e1: f64, b2: f64, e2: f64) -> f64 {
    match (e1 > 0.0, e2 > 0.0) {
        (true, true) | (false, false) => relu_same_sign(b1, b2),
        (true, false) => relu_opposite_sign(b1, b2),
        (false, true) => relu_opposite_sign(b2, b1),
    }
}

fn closed_form_parts(bank: &FeatureBank, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = bank.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut t = DMatrix::zeros(n, order + 1);
    let mut row = Vec::with_capacity(order + 1);
    for (i, (&b, &e)) in bank.biases().iter().zip(bank.signs()).enumerate() {
        relu_feature_hermite(order, b, e, &mut row);
        for (j, v) in row.iter().enumerate() {
            t[(i, j)] = v * scale;
        }
    }
    let mut gram = DMatrix::zeros(n, n);
    let (bs, es) = (bank.biases(), bank.signs());
    for i in 0..n {
        for k in i..n {
            let v = relu_pair_inner(bs[i], es[i], bs[k], es[k]) / n as f64;
            gram[(i, k)] = v;
            gram[(k, i)] = v;
        }
    }
    (t, gram)
}

fn quadrature_parts(bank: &FeatureBank, order: usize, q: &QuadratureRule) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = bank.len();
    let nodes = q.node_count();
    // feats[i, k] = Φ_i(z_k) √w_k
    let mut feats = DMatrix::zeros(n, nodes);
    let mut herm = DMatrix::zeros(nodes, order + 1);
    let mut phi = vec![0.0; n];
    let mut h = Vec::with_capacity(order + 1);
    for (k, (&z, &w)) in q.nodes().iter().zip(q.weights()).enumerate() {
        let sw = w.sqrt();
        bank.phi_into(z, &mut phi);
        for i in 0..n {
            feats[(i, k)] = phi[i] * sw;
        }
        hermite_values_into(order, z, &mut h);
        for j in 0..=order {
            herm[(k, j)] = h[j] * sw;
        }
    }
    let t = &feats * &herm;
    let gram = &feats * feats.transpose();
    (t, gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_bank;
    use crate::hermite::{project_to_series, relu_coeffs_closed_form};

    #[test]
    fn single_feature_gram_is_squared_norm() {
        let bank = FeatureBank::from_parts(vec![0.3], vec![-1.0], 2.0, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 8, 0.0).unwrap();
        let q = QuadratureRule::piecewise_default(&[-0.3]);
        let direct = q.expect(|z| (-z - 0.3_f64).max(0.0).powi(2));
        assert!((op.gram()[(0, 0)] - direct).abs() < 1e-13);
    }

    #[test]
    fn closed_form_hermite_matches_projection() {
        for (b, e) in [(0.0, 1.0), (1.3, 1.0), (-0.7, -1.0), (2.5, -1.0)] {
            let q = QuadratureRule::piecewise_default(&[b * e]);
            let quad = project_to_series(|z| (e * z - b).max(0.0), 30, &q).unwrap();
            let mut cf = Vec::new();
            relu_feature_hermite(30, b, e, &mut cf);
            for j in 0..=30 {
                assert!((cf[j] - quad.coeff(j)).abs() < 1e-11, "b={b} e={e} j={j}");
            }
        }
        // b = 0, ε = +1 is ReLU itself
        let mut cf = Vec::new();
        relu_feature_hermite(12, 0.0, 1.0, &mut cf);
        let relu = relu_coeffs_closed_form(12);
        for j in 0..=12 {
            assert!((cf[j] - relu.coeff(j)).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_pairs_match_quadrature() {
        let pts = [(-1.0, 1.0), (0.5, -1.0), (-2.0, -1.0), (1.5, 1.0), (-0.3, -1.0), (3.0, 1.0)];
        for &(b1, e1) in &pts {
            for &(b2, e2) in &pts {
                let q = QuadratureRule::piecewise_default(&[b1 * e1, b2 * e2]);
                let direct = q.expect(|z| (e1 * z - b1).max(0.0) * (e2 * z - b2).max(0.0));
                let cf = relu_pair_inner(b1, e1, b2, e2);
                assert!((direct - cf).abs() < 1e-12, "({b1},{e1}) ({b2},{e2}): {direct} vs {cf}");
            }
        }
    }

    #[test]
    fn backends_agree() {
        let bank = sample_bank(12, 2.0, 7, Activation::Relu).unwrap();
        let cf = FeatureOperator::new(&bank, 20, 0.01).unwrap();
        let quad = build_operator(&bank, 20, 0.01, &QuadratureRule::piecewise_default(&bank.kinks())).unwrap();
        assert!((cf.t_matrix() - quad.t_matrix()).amax() < 1e-11);
        assert!((cf.gram() - quad.gram()).amax() < 1e-11);
    }

    #[test]
    fn projection_edge_cases() {
        let bank = sample_bank(30, 2.0, 2, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 32, 0.01).unwrap();
        let zero = regularized_projection(&op, &HermiteSeries::zeros(32)).unwrap();
        assert_eq!(zero.coeffs.norm(), 0.0);
        assert_eq!(zero.residual_sq, 0.0);

        let f = HermiteSeries::basis(2, 32);
        let big = regularized_projection(&op.with_lambda(1e8).unwrap(), &f).unwrap();
        assert!(big.coeffs.norm() < 1e-7);
        assert!((big.residual_sq - 1.0).abs() < 1e-6);

        assert!(regularized_projection(&op.with_lambda(0.0).unwrap(), &f).is_err());
    }

    #[test]
    fn residual_is_monotone_in_lambda_and_bounded() {
        let bank = sample_bank(60, 2.0, 5, Activation::Relu).unwrap();
        let op = FeatureOperator::new(&bank, 40, 1.0).unwrap();
        let f = relu_coeffs_closed_form(40).strip_low_order(1).unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [1.0, 0.3, 0.1, 0.03, 0.01, 0.001] {
            let r = regularized_projection(&op.with_lambda(lambda).unwrap(), &f).unwrap().residual_sq;
            assert!(r <= f.norm_sq() + 1e-12);
            assert!(r <= prev + 1e-12, "lambda={lambda}: {r} > {prev}");
            prev = r;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let bank = sample_bank(4, 2.0, 1, Activation::SmoothedRelu { rho: 0.9 }).unwrap();
        assert!(FeatureOperator::build(&bank, 4, 0.1, &Backend::ClosedForm).is_err());
        assert!(FeatureOperator::new(&bank, 4, -1.0).is_err());
        let coarse = QuadratureRule::gauss_hermite(3).unwrap();
        assert!(matches!(
            build_operator(&bank, 10, 0.1, &coarse),
            Err(Error::InsufficientQuadrature { .. })
        ));
    }

    #[test]
    fn psd_check_catches_indefinite_gram() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&bad), Err(Error::NegativeEigenvalue(_))));
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bank = sample_bank(10, 2.0, 3, Activation::Relu).unwrap();
        let backend = Backend::ClosedForm;
        let a = FeatureOperator::load_or_build(dir.path(), &bank, 16, 0.05, &backend).unwrap();
        let key = FeatureOperator::cache_key(&bank, 16, 0.05, &backend);
        assert!(cache_path(dir.path(), key).exists());
        let b = FeatureOperator::load_or_build(dir.path(), &bank, 16, 0.05, &backend).unwrap();
        assert_eq!(a.t_matrix(), b.t_matrix());
        assert_eq!(a.gram(), b.gram());
        assert_ne!(key, FeatureOperator::cache_key(&bank, 16, 0.06, &backend));
    }
}
