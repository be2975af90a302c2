//! Frozen random-feature bank `Φ(u) = (φ(ε_i u - b_i) / √N)_i`.
//!
//! Biases `b_i ~ N(0, τ²)` and Rademacher signs `ε_i` are drawn once from a
//! seed and never trained. The submodules build the objects the rest of the
//! crate needs from a bank: the feature-to-Hermite operator and Gram matrix
//! ([`operator`]) and the population kernel with its RKHS diagnostics
//! ([`kernel`]).

pub mod kernel;
pub mod operator;

pub use kernel::{
    degrees_of_freedom_sup, empirical_kernel, kernel, kernel_closed_form, rkhs_norm_bound, IntervalRule,
};
pub use operator::{build_operator, regularized_projection, Backend, FeatureOperator, Projection};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::gaussian_pdf;
use crate::stats::normal_cdf;
use crate::util;

/// Activation applied to every feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Gaussian-smoothed ReLU `U_ρ max(0, ·)`.
    SmoothedRelu { rho: f64 },
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Relu => Ok(()),
            Activation::SmoothedRelu { rho } if (0.0..=1.0).contains(&rho) => Ok(()),
            Activation::SmoothedRelu { rho } => Err(Error::InvalidParameter(format!(
                "smoothing parameter {rho} outside [0, 1]"
            ))),
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Activation::Relu => t.max(0.0),
            Activation::SmoothedRelu { rho } => smoothed_relu_unchecked(rho, t),
        }
    }

    /// First derivative, with `ReLU'(0) = 0`.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::SmoothedRelu { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                if s == 0.0 {
                    return if t > 0.0 { 1.0 } else { 0.0 };
                }
                rho * normal_cdf(rho * t / s)
            }
        }
    }

    /// Second derivative (zero almost everywhere for ReLU).
    pub fn second_derivative(&self, t: f64) -> f64 {
        match *self {
            Activation::Relu => 0.0,
            Activation::SmoothedRelu { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                if s == 0.0 {
                    return 0.0;
                }
                rho * rho / s * gaussian_pdf(rho * t / s)
            }
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(*self, Activation::SmoothedRelu { rho } if rho < 1.0)
    }
}

/// `φ_ρ(t) = E_u[max(0, ρt + √(1-ρ²) u)]` in closed form:
/// `ρt Φ(ρt/s) + s γ(ρt/s)` with `s = √(1-ρ²)`.
pub fn smoothed_relu(rho: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("smoothing parameter {rho} outside [0, 1]")));
    }
    Ok(smoothed_relu_unchecked(rho, t))
}

fn smoothed_relu_unchecked(rho: f64, t: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    let mu = rho * t;
    if s == 0.0 {
        return mu.max(0.0);
    }
    let r = mu / s;
    mu * normal_cdf(r) + s * gaussian_pdf(r)
}

/// N frozen biases and signs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    biases: Vec<f64>,
    signs: Vec<f64>,
    tau: f64,
    activation: Activation,
    seed: u64,
    explicit: bool,
}

#[derive(Serialize, Deserialize)]
struct BankWire {
    seed: u64,
    #[serde(rename = "N")]
    n: usize,
    tau: f64,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    biases: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signs: Option<Vec<f64>>,
}

impl Serialize for FeatureBank {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BankWire {
            seed: self.seed,
            n: self.len(),
            tau: self.tau,
            activation: self.activation,
            biases: self.explicit.then(|| self.biases.clone()),
            signs: self.explicit.then(|| self.signs.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureBank {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = BankWire::deserialize(d)?;
        let bank = match (w.biases, w.signs) {
            (Some(b), Some(s)) => {
                if b.len() != w.n {
                    return Err(D::Error::custom(format!("N = {} but {} biases", w.n, b.len())));
                }
                FeatureBank::from_parts(b, s, w.tau, w.activation).map(|mut bank| {
                    bank.seed = w.seed;
                    bank
                })
            }
            (None, None) => sample_bank(w.n, w.tau, w.seed, w.activation),
            _ => return Err(D::Error::custom("biases and signs must be given together")),
        };
        bank.map_err(D::Error::custom)
    }
}

/// Draw `N` biases `b_i ~ N(0, τ²)` and signs `ε_i ~ Rad` from `seed`.
pub fn sample_bank(n: usize, tau: f64, seed: u64, activation: Activation) -> Result<FeatureBank> {
    if n == 0 {
        return Err(Error::InvalidParameter("bank needs N >= 1".into()));
    }
    if !(tau > 1.0) {
        return Err(Error::InvalidParameter(format!("bias scale tau = {tau} must exceed 1")));
    }
    activation.validate()?;
    let mut rng = util::rng(seed, util::streams::BANK);
    let mut biases = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        biases.push(tau * z);
        signs.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    Ok(FeatureBank {
        biases,
        signs,
        tau,
        activation,
        seed,
        explicit: false,
    })
}

impl FeatureBank {
    /// Bank with explicit biases and signs (signs must be ±1).
    pub fn from_parts(biases: Vec<f64>, signs: Vec<f64>, tau: f64, activation: Activation) -> Result<Self> {
        if biases.is_empty() || biases.len() != signs.len() {
            return Err(Error::InvalidParameter(format!(
                "need equal, nonzero numbers of biases ({}) and signs ({})",
                biases.len(),
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidParameter("signs must be +1 or -1".into()));
        }
        if !(tau > 1.0) {
            return Err(Error::InvalidParameter(format!("bias scale tau = {tau} must exceed 1")));
        }
        activation.validate()?;
        Ok(Self {
            biases,
            signs,
            tau,
            activation,
            seed: 0,
            explicit: true,
        })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same biases and signs with a different activation.
    pub fn with_activation(&self, activation: Activation) -> Result<Self> {
        activation.validate()?;
        Ok(Self {
            activation,
            ..self.clone()
        })
    }

    /// Kink locations `ε_i b_i` of the features in the input variable.
    pub fn kinks(&self) -> Vec<f64> {
        self.biases.iter().zip(&self.signs).map(|(b, e)| b * e).collect()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.len() as f64).sqrt()
    }

    /// `Φ(u)`.
    pub fn phi(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.phi_into(u, &mut out);
        out
    }

    pub fn phi_into(&self, u: f64, out: &mut [f64]) {
        let s = self.scale();
        for ((o, b), e) in out.iter_mut().zip(&self.biases).zip(&self.signs) {
            *o = self.activation.value(e * u - b) * s;
        }
    }

    /// `Φ'(u)`, entry `i` equal to `ε_i φ'(ε_i u - b_i) / √N`.
    pub fn phi_prime(&self, u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.phi_prime_into(u, &mut out);
        out
    }

    pub fn phi_prime_into(&self, u: f64, out: &mut [f64]) {
        let s = self.scale();
        for ((o, b), e) in out.iter_mut().zip(&self.biases).zip(&self.signs) {
            *o = e * self.activation.derivative(e * u - b) * s;
        }
    }

    /// Fused `(cᵀΦ(u), cᵀΦ'(u))`.
    #[inline]
    pub fn eval_with_derivative(&self, c: &[f64], u: f64) -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for ((ci, b), e) in c.iter().zip(&self.biases).zip(&self.signs) {
            if *ci == 0.0 {
                continue;
            }
            let t = e * u - b;
            g += ci * self.activation.value(t);
            dg += ci * e * self.activation.derivative(t);
        }
        let s = self.scale();
        (g * s, dg * s)
    }

    /// Smallest `|ε_i u - b_i|`, i.e. distance to the nearest ReLU kink.
    pub fn kink_distance(&self, u: f64) -> f64 {
        self.biases
            .iter()
            .zip(&self.signs)
            .map(|(b, e)| (e * u - b).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Content hash over biases, signs, τ and activation.
    pub fn fingerprint(&self) -> u64 {
        let act = match self.activation {
            Activation::Relu => [0.0, 0.0],
            Activation::SmoothedRelu { rho } => [1.0, rho],
        };
        util::hash_f64s(
            self.biases
                .iter()
                .chain(&self.signs)
                .copied()
                .chain([self.tau])
                .chain(act),
        )
    }
}
