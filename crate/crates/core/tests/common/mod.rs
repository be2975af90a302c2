#![allow(dead_code)]

use std::f64::consts::PI;

pub fn gauss(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `E_γ[f]` by Simpson on `[-14, 14]`, split at `kinks`.
pub fn gauss_expect(f: impl Fn(f64) -> f64, kinks: &[f64]) -> f64 {
    let mut pts = vec![-14.0];
    let mut k: Vec<f64> = kinks.iter().copied().filter(|v| v.abs() < 14.0).collect();
    k.sort_by(f64::total_cmp);
    pts.extend(k);
    pts.push(14.0);
    pts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| simpson(|z| f(z) * gauss(z), w[0], w[1], (((w[1] - w[0]) * 400.0) as usize).max(8)))
        .sum()
}

/// Normalized probabilists' Hermite polynomial from the explicit sum
/// `He_j(z) = j! Σ_m (-1)^m z^{j-2m} / (m! (j-2m)! 2^m)`.
pub fn hermite_explicit(j: usize, z: f64) -> f64 {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut s = 0.0;
    for m in 0..=j / 2 {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * z.powi((j - 2 * m) as i32) / (fact(m) * fact(j - 2 * m) * 2f64.powi(m as i32));
    }
    s * fact(j) / fact(j).sqrt()
}
