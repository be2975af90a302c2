//! Regularized projection of a teacher onto a random-feature span.

use sindex::datagen::{make_teacher, Link, TeacherConfig};
use sindex::features::{regularized_projection, sample_bank, Activation, FeatureOperator};

fn main() -> sindex::Result<()> {
    let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), 10, 0)?;
    for n in [50, 200, 800] {
        let bank = sample_bank(n, 2.0, 0, Activation::Relu)?;
        let op = FeatureOperator::new(&bank, teacher.series().order(), 1e-2)?;
        print!("N = {n:>4}, tr Σ̂ = {:.3}:", op.trace());
        for lambda in [1e-1, 1e-2, 1e-3] {
            let p = regularized_projection(&op.with_lambda(lambda)?, teacher.series())?;
            print!("  λ={lambda:e} residual² {:.2e}", p.residual_sq);
        }
        println!();
    }
    Ok(())
}
