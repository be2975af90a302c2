//! Population landscape of a stripped teacher: loss and critical residual
//! over m, the stationary points, and an SVG of the scan.

use sindex::datagen::{make_teacher, Link, TeacherConfig};
use sindex::features::{sample_bank, Activation, FeatureOperator};
use sindex::harness::{render_svg, PlotKind, Table};
use sindex::landscape::{uniform_grid, PopulationOracle};

fn main() -> sindex::Result<()> {
    let s = 2;
    let teacher = make_teacher(&TeacherConfig::new(Link::stripped(Link::default_piecewise(), s)), 10, 0)?;
    let bank = sample_bank(256, 2.0, 0, Activation::Relu)?;
    let op = FeatureOperator::new(&bank, teacher.series().order(), 1e-3)?;
    let oracle = PopulationOracle::new(teacher.series(), op, teacher.sigma())?;
    let rows = oracle.scan(&uniform_grid(-1.0, 1.0, 41))?;
    let mut table = Table::new(&["m", "loss", "residual"]);
    for r in &rows {
        println!("m = {:+.2}  L̄ = {:.5}  residual = {:+.3e}", r.m, r.loss, r.residual);
        table.push(vec![r.m.to_string(), r.loss.to_string(), r.residual.to_string()]);
    }
    println!("residual roots in (0.01, 0.99): {:?}", oracle.residual_roots(0.01, 0.99, 99)?);
    let (_, c_opt) = oracle.projected_population_loss(1.0)?;
    println!("at the pole: {:?}", oracle.classify_near_critical(c_opt.as_slice(), 1.0, 1e-3)?);
    let path = std::env::temp_dir().join("landscape_scan.svg");
    if let Some(svg) = render_svg(&table, PlotKind::LandscapeScan)? {
        std::fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
