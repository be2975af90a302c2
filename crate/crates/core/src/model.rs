//! The shallow network `G(x; c, θ) = cᵀΦ(⟨θ, x⟩)`, its empirical ridge loss
//! and the gradients in `c` and (spherically) in `θ`.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::features::{Activation, FeatureBank};
use crate::util;

/// Allowed drift of `‖θ‖` from 1.
pub const UNIT_TOL: f64 = 1e-12;

/// Trainable state: second-layer weights and the shared unit direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub c: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ModelState {
    /// Validates `‖θ‖ = 1`.
    pub fn new(c: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let s = Self { c, theta };
        s.check_unit()?;
        Ok(s)
    }

    /// Builds a state after normalizing `θ`.
    pub fn normalized(c: Vec<f64>, mut theta: Vec<f64>) -> Result<Self> {
        let n = util::norm(&theta);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NonUnitDirection(n));
        }
        theta.iter_mut().for_each(|t| *t /= n);
        Ok(Self { c, theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn c_norm(&self) -> f64 {
        util::norm(&self.c)
    }

    /// `m = ⟨θ, θ*⟩`, clamped to `[-1, 1]` against rounding.
    pub fn overlap(&self, theta_star: &[f64]) -> f64 {
        util::dot(&self.theta, theta_star).clamp(-1.0, 1.0)
    }

    pub fn check_unit(&self) -> Result<()> {
        let n = util::norm(&self.theta);
        if (n - 1.0).abs() > UNIT_TOL {
            Err(Error::NonUnitDirection(n))
        } else {
            Ok(())
        }
    }

    fn check_dims(&self, bank: &FeatureBank, d: usize) -> Result<()> {
        if self.c.len() != bank.len() {
            return Err(Error::DimensionMismatch { expected: bank.len(), found: self.c.len() });
        }
        if self.theta.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.theta.len() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parse and validate `‖θ‖ = 1`.
    pub fn from_json(s: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(s)?;
        state.check_unit()?;
        Ok(state)
    }
}

/// `G(x) = cᵀΦ(⟨θ, x⟩)`.
pub fn forward(state: &ModelState, bank: &FeatureBank, x: &[f64]) -> Result<f64> {
    state.check_dims(bank, x.len())?;
    let u = util::dot(&state.theta, x);
    Ok(bank.eval_with_derivative(&state.c, u).0)
}

/// Loss and both gradients from one pass over the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_c: Vec<f64>,
    /// Euclidean gradient in `θ`, before projection.
    pub grad_theta_euclid: Vec<f64>,
}

impl LossGrad {
    /// `P_{θ⊥} ∇_θ L`.
    pub fn grad_theta_spherical(&self, theta: &[f64]) -> Vec<f64> {
        project_tangent(theta, &self.grad_theta_euclid)
    }
}

/// `v - ⟨θ, v⟩θ`.
pub fn project_tangent(theta: &[f64], v: &[f64]) -> Vec<f64> {
    let a = util::dot(theta, v);
    v.iter().zip(theta).map(|(vi, ti)| vi - a * ti).collect()
}

fn validate(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be >= 0")));
    }
    state.check_dims(bank, data.dim())
}

/// `L_n(c, θ) = (1/n) Σ (cᵀΦ(⟨θ, x_i⟩) - y_i)² + λ‖c‖²`.
pub fn empirical_loss(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<f64> {
    validate(state, bank, data, lambda)?;
    let u = data.project(&state.theta);
    let scale = 1.0 / (bank.len() as f64).sqrt();
    if bank.activation() == Activation::Relu {
        let lay = ReluLayout::new(bank, &state.c);
        let total: f64 = u.iter().zip(data.ys()).map(|(&ui, &yi)| (lay.eval(ui).0 * scale - yi).powi(2)).sum();
        return Ok(total / data.len() as f64 + lambda * util::dot(&state.c, &state.c));
    }
    let act = bank.activation();
    let (b, e) = (bank.biases(), bank.signs());
    let mut total = 0.0;
    for (&ui, &yi) in u.iter().zip(data.ys()) {
        let mut g = 0.0;
        for k in 0..b.len() {
            g += state.c[k] * act.value(e[k] * ui - b[k]);
        }
        let r = g * scale - yi;
        total += r * r;
    }
    Ok(total / data.len() as f64 + lambda * util::dot(&state.c, &state.c))
}

/// Loss, `∇_c` and Euclidean `∇_θ` in a single pass.
///
/// `∇_c = (2/n) Σ r_i Φ(u_i) + 2λc` and `∇_θ = (2/n) Σ r_i (cᵀΦ'(u_i)) x_i`
/// with `r_i = G(x_i) - y_i`. ReLU banks use [`ReluLayout`], which costs
/// `O(n log N)` instead of `O(nN)`.
pub fn loss_and_grads(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<LossGrad> {
    validate(state, bank, data, lambda)?;
    if bank.activation() == Activation::Relu {
        return Ok(relu_loss_and_grads(state, bank, data, lambda));
    }
    Ok(direct_loss_and_grads(state, bank, data, lambda))
}

/// Feature-by-feature evaluation of [`loss_and_grads`], for any activation.
pub fn loss_and_grads_direct(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<LossGrad> {
    validate(state, bank, data, lambda)?;
    Ok(direct_loss_and_grads(state, bank, data, lambda))
}

fn direct_loss_and_grads(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> LossGrad {
    let n_feat = bank.len();
    let scale = 1.0 / (n_feat as f64).sqrt();
    let act = bank.activation();
    let (b, e) = (bank.biases(), bank.signs());
    let u = data.project(&state.theta);
    let mut phi = vec![0.0; n_feat];
    let mut gc = vec![0.0; n_feat];
    // per-sample weight on x_i in the θ-gradient
    let mut wx = vec![0.0; data.len()];
    let mut total = 0.0;
    for (i, (&ui, &yi)) in u.iter().zip(data.ys()).enumerate() {
        let (mut g, mut dg) = (0.0, 0.0);
        for k in 0..n_feat {
            let t = e[k] * ui - b[k];
            let v = act.value(t);
            phi[k] = v;
            g += state.c[k] * v;
            dg += state.c[k] * e[k] * act.derivative(t);
        }
        let r = g * scale - yi;
        total += r * r;
        let rs = r * scale;
        for k in 0..n_feat {
            gc[k] += rs * phi[k];
        }
        wx[i] = rs * dg;
    }
    let inv_n = 1.0 / data.len() as f64;
    for k in 0..n_feat {
        gc[k] = 2.0 * (gc[k] * inv_n + lambda * state.c[k]);
    }
    let gt = data.xs().tr_mul(&nalgebra::DVector::from_vec(wx));
    let grad_theta_euclid = gt.iter().map(|v| 2.0 * v * inv_n).collect();
    LossGrad {
        loss: total * inv_n + lambda * util::dot(&state.c, &state.c),
        grad_c: gc,
        grad_theta_euclid,
    }
}

/// ReLU features sorted by kink, with prefix sums of the weights.
///
/// A `+` feature is active when `u > b_k`, a `-` feature when `u < -b_k`.
/// Sorting both groups by threshold turns `cᵀΦ(u)` and its derivative into
/// two binary searches and a few prefix-sum lookups.
#[derive(Debug, Clone)]
pub struct ReluLayout {
    plus_idx: Vec<usize>,
    plus_t: Vec<f64>,
    minus_idx: Vec<usize>,
    minus_t: Vec<f64>,
    // Σ c and Σ c·t over the first k plus features
    plus_c: Vec<f64>,
    plus_ct: Vec<f64>,
    // Σ c and Σ c·t over minus features k..
    minus_c: Vec<f64>,
    minus_ct: Vec<f64>,
}

impl ReluLayout {
    pub fn new(bank: &FeatureBank, c: &[f64]) -> Self {
        let (b, e) = (bank.biases(), bank.signs());
        let mut plus: Vec<usize> = (0..b.len()).filter(|&k| e[k] > 0.0).collect();
        let mut minus: Vec<usize> = (0..b.len()).filter(|&k| e[k] <= 0.0).collect();
        plus.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(i.cmp(&j)));
        minus.sort_by(|&i, &j| (-b[i]).total_cmp(&-b[j]).then(i.cmp(&j)));
        let plus_t: Vec<f64> = plus.iter().map(|&k| b[k]).collect();
        let minus_t: Vec<f64> = minus.iter().map(|&k| -b[k]).collect();
        let mut plus_c = vec![0.0; plus.len() + 1];
        let mut plus_ct = vec![0.0; plus.len() + 1];
        for (i, &k) in plus.iter().enumerate() {
            plus_c[i + 1] = plus_c[i] + c[k];
            plus_ct[i + 1] = plus_ct[i] + c[k] * plus_t[i];
        }
        let mut minus_c = vec![0.0; minus.len() + 1];
        let mut minus_ct = vec![0.0; minus.len() + 1];
        for (i, &k) in minus.iter().enumerate().rev() {
            minus_c[i] = minus_c[i + 1] + c[k];
            minus_ct[i] = minus_ct[i + 1] + c[k] * minus_t[i];
        }
        Self { plus_idx: plus, plus_t, minus_idx: minus, minus_t, plus_c, plus_ct, minus_c, minus_ct }
    }

    /// `(p, q)`: number of active `+` features and index of the first
    /// active `-` feature. Ties with a kink count as inactive.
    #[inline]
    fn locate(&self, u: f64) -> (usize, usize) {
        (self.plus_t.partition_point(|&t| t < u), self.minus_t.partition_point(|&t| t <= u))
    }

    /// Unscaled `Σ c_k φ(ε_k u - b_k)` and its `u`-derivative.
    #[inline]
    fn eval_at(&self, u: f64, p: usize, q: usize) -> (f64, f64) {
        let g = u * self.plus_c[p] - self.plus_ct[p] + self.minus_ct[q] - u * self.minus_c[q];
        (g, self.plus_c[p] - self.minus_c[q])
    }

    pub fn eval(&self, u: f64) -> (f64, f64) {
        let (p, q) = self.locate(u);
        self.eval_at(u, p, q)
    }
}

fn relu_loss_and_grads(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> LossGrad {
    let n_feat = bank.len();
    let scale = 1.0 / (n_feat as f64).sqrt();
    let lay = ReluLayout::new(bank, &state.c);
    let u = data.project(&state.theta);
    let (np, nm) = (lay.plus_idx.len(), lay.minus_idx.len());
    // residual sums bucketed by kink interval
    let mut rp = vec![0.0; np + 1];
    let mut rup = vec![0.0; np + 1];
    let mut rm = vec![0.0; nm + 1];
    let mut rum = vec![0.0; nm + 1];
    let mut wx = vec![0.0; data.len()];
    let mut total = 0.0;
    for (i, (&ui, &yi)) in u.iter().zip(data.ys()).enumerate() {
        let (p, q) = lay.locate(ui);
        let (g, dg) = lay.eval_at(ui, p, q);
        let r = g * scale - yi;
        total += r * r;
        let rs = r * scale;
        rp[p] += rs;
        rup[p] += rs * ui;
        rm[q] += rs;
        rum[q] += rs * ui;
        wx[i] = rs * dg;
    }
    let inv_n = 1.0 / data.len() as f64;
    let mut gc = vec![0.0; n_feat];
    // plus feature k is active for buckets p > k
    let (mut sr, mut sru) = (0.0, 0.0);
    for k in (0..np).rev() {
        sr += rp[k + 1];
        sru += rup[k + 1];
        gc[lay.plus_idx[k]] = sru - lay.plus_t[k] * sr;
    }
    // minus feature k is active for buckets q <= k
    let (mut sr, mut sru) = (0.0, 0.0);
    for k in 0..nm {
        sr += rm[k];
        sru += rum[k];
        gc[lay.minus_idx[k]] = lay.minus_t[k] * sr - sru;
    }
    for k in 0..n_feat {
        gc[k] = 2.0 * (gc[k] * inv_n + lambda * state.c[k]);
    }
    let gt = data.xs().tr_mul(&nalgebra::DVector::from_vec(wx));
    LossGrad {
        loss: total * inv_n + lambda * util::dot(&state.c, &state.c),
        grad_c: gc,
        grad_theta_euclid: gt.iter().map(|v| 2.0 * v * inv_n).collect(),
    }
}

/// `∇_c L_n`.
pub fn grad_c(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    Ok(loss_and_grads(state, bank, data, lambda)?.grad_c)
}

/// Spherical gradient `P_{θ⊥} ∇_θ L_n`; requires `‖θ‖ = 1`.
pub fn grad_theta_spherical(state: &ModelState, bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    state.check_unit()?;
    Ok(loss_and_grads(state, bank, data, lambda)?.grad_theta_spherical(&state.theta))
}

/// Smallest `|ε_k⟨θ, x_i⟩ - b_k|` over all samples and features.
pub fn min_kink_distance(state: &ModelState, bank: &FeatureBank, data: &Dataset) -> f64 {
    data.project(&state.theta)
        .iter()
        .map(|&u| bank.kink_distance(u))
        .fold(f64::INFINITY, f64::min)
}

/// True when no preactivation is within `tol` of a ReLU kink, so finite
/// differences with steps well below `tol` see a smooth loss.
pub fn avoids_kinks(state: &ModelState, bank: &FeatureBank, data: &Dataset, tol: f64) -> bool {
    min_kink_distance(state, bank, data) >= tol
}
