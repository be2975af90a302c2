//! ReLU Hermite coefficients, OU smoothing and stripped teachers.

use sindex::datagen::{make_teacher, Link, TeacherConfig};
use sindex::hermite::{project_to_series, relu_coeffs_closed_form, QuadratureRule};

fn main() -> sindex::Result<()> {
    let exact = relu_coeffs_closed_form(10);
    let quad = project_to_series(|z| z.max(0.0), 10, &QuadratureRule::piecewise_default(&[0.0]))?;
    println!("{:>3} {:>14} {:>14}", "j", "closed form", "quadrature");
    for j in 0..=10 {
        println!("{j:>3} {:>14.10} {:>14.10}", exact.coeff(j), quad.coeff(j));
    }

    let smooth = exact.ou_transform(0.8)?;
    println!("\nU_0.8 ReLU: α_2 = {:.6}, α_4 = {:.6}", smooth.coeff(2), smooth.coeff(4));

    for s in 1..=3 {
        let t = make_teacher(&TeacherConfig::new(Link::stripped(Link::default_piecewise(), s)), 10, 0)?;
        println!(
            "stripped to s = {s}: exponent {}, first coefficients {:?}",
            t.information_exponent()?,
            t.series().coeffs()[..5].iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
    Ok(())
}
