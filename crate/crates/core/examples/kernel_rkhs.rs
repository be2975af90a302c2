//! The bias-averaged ReLU kernel, its random-feature estimate and the
//! degrees-of-freedom bound.

use sindex::features::{degrees_of_freedom_sup, empirical_kernel, kernel, kernel_closed_form, sample_bank, Activation};

fn main() -> sindex::Result<()> {
    let tau = 2.0;
    let bank = sample_bank(20_000, tau, 1, Activation::Relu)?;
    println!("{:>6} {:>6} {:>12} {:>12} {:>12}", "u", "v", "closed", "quadrature", "N = 20000");
    for &(u, v) in &[(0.0, 0.0), (1.0, 1.0), (1.0, -1.0), (2.5, 0.3)] {
        println!(
            "{u:>6} {v:>6} {:>12.6} {:>12.6} {:>12.6}",
            kernel_closed_form(tau, u, v)?,
            kernel(tau, Activation::Relu, u, v)?,
            empirical_kernel(&bank, u, v)
        );
    }
    let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.2).collect();
    for lambda in [0.1, 0.01, 0.001] {
        let dof = degrees_of_freedom_sup(tau, Activation::Relu, 32, lambda, &grid)?;
        println!("λ = {lambda}: sup degrees of freedom {dof:.2}");
    }
    Ok(())
}
