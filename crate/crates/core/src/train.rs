//! Two-phase gradient descent on `(c, θ)` and ridge fine-tuning of `c`.
//!
//! Phase 1 (`T0` steps) moves `θ` only, along the negative spherical
//! gradient followed by renormalization. Phase 2 (`T1` steps) moves `c` and
//! `θ` together. With backoff enabled a step whose loss exceeds the current
//! loss by more than [`DESCENT_TOL`] is halved and retried.

use std::io::Write;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{random_unit, Dataset, Stream, TeacherSpec};
use crate::error::{Error, Result};
use crate::features::FeatureBank;
use crate::model::{forward, loss_and_grads, LossGrad, ModelState};
use crate::stats;
use crate::util::{self, streams};

/// Loss increase tolerated by a backoff step.
pub const DESCENT_TOL: f64 = 1e-10;
/// Halvings tried before a step is given up.
pub const MAX_HALVINGS: usize = 30;
/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Largest condition number accepted by the ridge solve.
pub const MAX_CONDITION: f64 = 1e12;

fn default_true() -> bool {
    true
}

fn default_record_every() -> usize {
    100
}

fn default_init_s() -> usize {
    1
}

/// Optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub step_theta: f64,
    pub step_c: f64,
    pub t0_steps: usize,
    pub t1_steps: usize,
    /// Initial `‖c‖`; the theory-guided default is used when absent.
    #[serde(default)]
    pub rho_init: Option<f64>,
    /// Initial support size of `c`; defaults to 3.
    #[serde(default)]
    pub n0: Option<usize>,
    /// Information exponent assumed by the default `ρ_init`.
    #[serde(default = "default_init_s")]
    pub init_s: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_true")]
    pub backoff: bool,
    /// When false, `c` is trained from the first step (no warm start).
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_ratio(0.01, 1.0, 100.0, 500, 9500)
    }
}

/// `max(3, ceil(ln 10))`.
pub const DEFAULT_N0: usize = 3;

impl TrainConfig {
    /// `step_c = step_theta / ratio`.
    pub fn with_ratio(lambda: f64, step_theta: f64, ratio: f64, t0_steps: usize, t1_steps: usize) -> Self {
        Self {
            lambda,
            step_theta,
            step_c: step_theta / ratio,
            t0_steps,
            t1_steps,
            rho_init: None,
            n0: None,
            init_s: 1,
            seed: 0,
            record_every: 100,
            backoff: true,
            warm_start: true,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {} must be > 0", self.lambda)));
        }
        if !(self.step_theta > 0.0 && self.step_theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_theta = {} must be > 0", self.step_theta)));
        }
        if !(self.step_c >= 0.0 && self.step_c.is_finite()) {
            return Err(Error::InvalidParameter(format!("step_c = {} must be >= 0", self.step_c)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        let n0 = self.n0();
        if n0 == 0 || n0 > n_features {
            return Err(Error::InvalidParameter(format!("N0 = {n0} must be in 1..={n_features}")));
        }
        if let Some(r) = self.rho_init {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("rho_init = {r} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn n0(&self) -> usize {
        self.n0.unwrap_or(DEFAULT_N0)
    }

    /// `√N · N0^{-(2+s)/2} / (τ² + λN/N0)` unless overridden.
    pub fn rho_init_for(&self, bank: &FeatureBank) -> f64 {
        self.rho_init.unwrap_or_else(|| {
            let n = bank.len() as f64;
            let n0 = self.n0() as f64;
            let s = self.init_s as f64;
            n.sqrt() * n0.powf(-(2.0 + s) / 2.0) / (bank.tau().powi(2) + self.lambda * n / n0)
        })
    }

    pub fn total_steps(&self) -> usize {
        self.t0_steps + self.t1_steps
    }
}

/// Random initial state: `θ` uniform on the sphere, `c` uniform on the
/// radius-`ρ` sphere of a uniformly chosen `N0`-subset.
pub fn init_state(config: &TrainConfig, bank: &FeatureBank, d: usize, seed: u64) -> Result<ModelState> {
    config.validate(bank.len())?;
    if d < 1 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut rng = util::rng(seed, streams::INIT);
    let theta = random_unit(d, &mut rng);
    let support = rand::seq::index::sample(&mut rng, bank.len(), config.n0());
    let mut c = vec![0.0; bank.len()];
    let dir = random_unit(config.n0().max(1), &mut rng);
    let rho = config.rho_init_for(bank);
    if config.n0() == 1 {
        c[support.index(0)] = if rng.random::<bool>() { rho } else { -rho };
    } else {
        for (k, i) in support.iter().enumerate() {
            c[i] = rho * dir[k];
        }
    }
    ModelState::new(c, theta)
}

/// One recorded optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// `⟨θ, θ*⟩` when the teacher is known.
    pub m: Option<f64>,
    pub loss: f64,
    pub grad_c_norm: f64,
    pub grad_theta_norm: f64,
    pub c_norm: f64,
}

/// Recorded diagnostics and the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub final_state: ModelState,
    /// Steps whose halvings were exhausted, leaving the state unchanged.
    pub rejected_steps: usize,
}

impl TrainTrace {
    pub fn final_overlap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.m)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["step", "m", "loss", "grad_c_norm", "grad_theta_norm", "c_norm"])?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.m.map(|m| m.to_string()).unwrap_or_default(),
                r.loss.to_string(),
                r.grad_c_norm.to_string(),
                r.grad_theta_norm.to_string(),
                r.c_norm.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn record(step: usize, state: &ModelState, lg: &LossGrad, theta_star: Option<&[f64]>) -> TraceRecord {
    TraceRecord {
        step,
        m: theta_star.map(|t| state.overlap(t)),
        loss: lg.loss,
        grad_c_norm: util::norm(&lg.grad_c),
        grad_theta_norm: util::norm(&lg.grad_theta_spherical(&state.theta)),
        c_norm: state.c_norm(),
    }
}

fn step_state(state: &ModelState, lg: &LossGrad, eta_theta: f64, eta_c: Option<f64>) -> ModelState {
    let g = lg.grad_theta_spherical(&state.theta);
    let mut theta: Vec<f64> = state.theta.iter().zip(&g).map(|(t, gi)| t - eta_theta * gi).collect();
    let n = util::norm(&theta);
    theta.iter_mut().for_each(|t| *t /= n);
    let c = match eta_c {
        Some(e) => state.c.iter().zip(&lg.grad_c).map(|(c, gi)| c - e * gi).collect(),
        None => state.c.clone(),
    };
    ModelState { c, theta }
}

/// Run phase 1 then phase 2 from `state0`.
pub fn run_two_phase(
    state0: &ModelState,
    config: &TrainConfig,
    bank: &FeatureBank,
    data: &Dataset,
    teacher: Option<&TeacherSpec>,
) -> Result<TrainTrace> {
    config.validate(bank.len())?;
    state0.check_unit()?;
    let theta_star = teacher.map(|t| t.theta_star());
    let mut state = state0.clone();
    let mut lg = loss_and_grads(&state, bank, data, config.lambda)?;
    let mut records = vec![record(0, &state, &lg, theta_star)];
    let mut rejected = 0;
    for step in 1..=config.total_steps() {
        let joint = step > config.t0_steps || !config.warm_start;
        let mut eta = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = step_state(&state, &lg, eta * config.step_theta, joint.then_some(eta * config.step_c));
            let trial_lg = loss_and_grads(&trial, bank, data, config.lambda)?;
            if !config.backoff || trial_lg.loss <= lg.loss + DESCENT_TOL {
                accepted = Some((trial, trial_lg));
                break;
            }
            eta *= 0.5;
        }
        match accepted {
            Some((s, l)) => {
                state = s;
                lg = l;
            }
            None => rejected += 1,
        }
        if !lg.loss.is_finite() || lg.loss > DIVERGENCE_LOSS {
            records.push(record(step, &state, &lg, theta_star));
            return Err(Error::Divergence {
                step,
                loss: lg.loss,
                trace: Box::new(TrainTrace { records, final_state: state, rejected_steps: rejected }),
            });
        }
        if step % config.record_every == 0 || step == config.total_steps() {
            records.push(record(step, &state, &lg, theta_star));
        }
    }
    Ok(TrainTrace { records, final_state: state, rejected_steps: rejected })
}

/// Feature matrix `Φ` with rows `Φ(⟨θ, x_i⟩)ᵀ`.
pub fn feature_matrix(theta: &[f64], bank: &FeatureBank, data: &Dataset) -> DMatrix<f64> {
    let u = data.project(theta);
    let mut m = DMatrix::zeros(data.len(), bank.len());
    let mut row = vec![0.0; bank.len()];
    for (i, &ui) in u.iter().enumerate() {
        bank.phi_into(ui, &mut row);
        for (k, v) in row.iter().enumerate() {
            m[(i, k)] = *v;
        }
    }
    m
}

/// Solve `((1/n) ΦᵀΦ + λ'I) c = (1/n) Φᵀy` on any dataset.
pub(crate) fn ridge_solve(theta: &[f64], bank: &FeatureBank, data: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda' = {lambda} must be > 0")));
    }
    if theta.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: theta.len() });
    }
    let phi = feature_matrix(theta, bank, data);
    let inv_n = 1.0 / data.len() as f64;
    let mut a = phi.tr_mul(&phi) * inv_n;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let rhs = phi.tr_mul(&DVector::from_column_slice(data.ys())) * inv_n;
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::IllConditioned(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
    }
    let chol = Cholesky::new(a).ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Ridge refit of `c` at fixed `θ̂` on a fresh fine-tuning sample.
///
/// Only datasets drawn from [`Stream::FineTune`] are accepted, so the refit
/// never reuses the training sample.
pub fn fine_tune_ridge(theta_hat: &[f64], bank: &FeatureBank, fresh: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    if fresh.stream() != Stream::FineTune {
        return Err(Error::WrongStream { expected: Stream::FineTune, found: fresh.stream() });
    }
    let n = util::norm(theta_hat);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NonUnitDirection(n));
    }
    ridge_solve(theta_hat, bank, fresh, lambda)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub se: f64,
}

/// `E_x[(G(x) - f*(⟨θ*, x⟩))²]` on `n_test` fresh noiseless samples.
pub fn excess_risk(
    state: &ModelState,
    bank: &FeatureBank,
    teacher: &TeacherSpec,
    n_test: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_test == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = teacher.dim();
    if state.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: state.dim() });
    }
    let mut rng = util::rng(seed, streams::TEST_DATA);
    let mut x = vec![0.0; d];
    let mut errs = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let target = teacher.eval(util::dot(&x, teacher.theta_star()));
        let pred = forward(state, bank, &x)?;
        errs.push((pred - target).powi(2));
    }
    let (mean, se) = stats::mean_se(&errs);
    Ok(RiskEstimate { mean, se })
}
