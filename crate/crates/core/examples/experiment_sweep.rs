//! A small seeded sweep through the experiment harness, with plots.
//!
//! Pass a config path to run it instead of the built-in grid.

use sindex::harness::{emit_plot, run_experiment, ExperimentConfig, Grid, PlotKind, ReportMode};

fn main() -> sindex::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => {
            let mut cfg = ExperimentConfig::default_study();
            cfg.grid = Grid {
                d: vec![10],
                s: vec![1, 2],
                n: vec![512, 1024, 2048],
                n_features: vec![100],
                lambda: vec![0.01],
                lambda_ft: vec![1e-4],
                step_theta: vec![1.0],
            };
            cfg.seeds = 3;
            cfg.train.t1_steps = 2500;
            cfg.report = ReportMode::MeanStd;
            cfg.output_dir = std::env::temp_dir().join("sindex_sweep");
            cfg
        }
    };
    let out = run_experiment(&cfg, true, false)?;
    let agg = out.results.filter("kind", "mean_std");
    for i in 0..agg.len() {
        println!(
            "d={} s={} n={:>5}: |m| {} risk {} -> {}",
            agg.get(i, "d").unwrap(),
            agg.get(i, "s").unwrap(),
            agg.get(i, "n").unwrap(),
            agg.get(i, "m_abs").unwrap(),
            agg.get(i, "risk_pre").unwrap(),
            agg.get(i, "risk_post").unwrap()
        );
    }
    for kind in [PlotKind::RiskVsN, PlotKind::MVsN] {
        if let Some(p) = emit_plot(&out.results, kind, &cfg.output_dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
