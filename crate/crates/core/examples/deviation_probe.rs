//! Uniform deviation between empirical and population gradients as n grows.

use sindex::datagen::{make_teacher, Link, TeacherConfig};
use sindex::features::{sample_bank, Activation, FeatureOperator};
use sindex::landscape::{deviation_probe, PopulationOracle};

fn main() -> sindex::Result<()> {
    let d = 10;
    let bank = sample_bank(100, 2.0, 0, Activation::Relu)?;
    let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), d, 0)?;
    let op = FeatureOperator::new(&bank, teacher.series().order(), 0.01)?;
    let oracle = PopulationOracle::new(teacher.series(), op, teacher.sigma())?;
    let ns: Vec<usize> = (8..=13).map(|k| 1 << k).collect();
    let probe = deviation_probe(&oracle, &bank, &teacher, &ns, 10, 5.0, 0)?;
    for r in &probe.rows {
        println!("n = {:>5}: max |∇_c dev| {:.4e}, max |∇_θ dev| {:.4e}", r.n, r.max_dev_c, r.max_dev_theta);
    }
    println!("log-log slopes: c {:.3}, θ {:.3}", probe.slope_c, probe.slope_theta);
    Ok(())
}
