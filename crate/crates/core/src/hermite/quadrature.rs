//! Quadrature rules normalized to the standard Gaussian measure.
//!
//! Two schemes are provided. [`QuadratureRule::gauss_hermite`] is exact on
//! polynomials of degree `2n - 1` and is the right tool for smooth integrands.
//! [`QuadratureRule::piecewise`] places composite Gauss–Legendre panels between
//! caller-supplied breakpoints and multiplies by the Gaussian density; it is
//! used whenever the integrand has kinks (ReLU features, piecewise-linear
//! teachers).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights such that `sum_k w_k f(z_k) ≈ E_{z ~ N(0,1)}[f(z)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Default half-width of the piecewise rule in standard deviations.
pub const PIECEWISE_RANGE: f64 = 40.0;

impl QuadratureRule {
    /// Gauss–Hermite rule with `n` nodes, rescaled from weight `exp(-x^2)` to
    /// the standard normal density.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("node count must be >= 1".into()));
        }
        let (x, w) = gauss_hermite_physicists(n);
        let nodes = x.iter().map(|&xi| xi * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|&wi| wi / PI.sqrt()).collect();
        Ok(Self { nodes, weights })
    }

    /// Composite Gauss–Legendre rule on `[-range, range]` against the Gaussian
    /// density, with panel boundaries at every breakpoint inside the range and
    /// panels no wider than `max_width`.
    pub fn piecewise(breakpoints: &[f64], range: f64, max_width: f64, order: usize) -> Result<Self> {
        if order == 0 || !(max_width > 0.0) || !(range > 0.0) {
            return Err(Error::InvalidParameter(
                "piecewise rule needs order >= 1, positive width and range".into(),
            ));
        }
        let mut cuts: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|b| b.is_finite() && b.abs() < range)
            .collect();
        cuts.push(-range);
        cuts.push(range);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let panels = ((b - a) / max_width).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * h;
                let mid = lo + 0.5 * h;
                for (&xi, &wi) in gx.iter().zip(&gw) {
                    let z = mid + 0.5 * h * xi;
                    nodes.push(z);
                    weights.push(0.5 * h * wi * gaussian_pdf(z));
                }
            }
        }
        Ok(Self { nodes, weights })
    }

    /// Piecewise rule with the defaults used throughout the crate.
    pub fn piecewise_default(breakpoints: &[f64]) -> Self {
        Self::piecewise(breakpoints, PIECEWISE_RANGE, 0.5, 16).expect("default parameters are valid")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Largest |node|.
    pub fn range(&self) -> f64 {
        self.nodes.iter().fold(0.0_f64, |acc, z| acc.max(z.abs()))
    }

    /// `E_γ[f]` under this rule.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// Stable content hash, used as part of operator cache keys.
    pub fn fingerprint(&self) -> u64 {
        crate::util::hash_f64s(self.nodes.iter().chain(self.weights.iter()).copied())
    }
}

pub(crate) fn gaussian_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Gauss–Hermite nodes and weights for weight `exp(-x^2)`, by Newton iteration
/// on the orthonormal recurrence.
fn gauss_hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
