//! One two-phase gradient descent run: direction warm-up then joint training.

use sindex::datagen::{make_teacher, sample_dataset, Link, TeacherConfig};
use sindex::features::{sample_bank, Activation};
use sindex::train::{init_state, run_two_phase, TrainConfig};

fn main() -> sindex::Result<()> {
    let (d, n, seed) = (10, 4096, 3);
    let bank = sample_bank(100, 2.0, seed, Activation::Relu)?;
    let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), d, seed)?;
    let data = sample_dataset(&teacher, n, d, seed)?;
    let cfg = TrainConfig { record_every: 250, seed, ..TrainConfig::with_ratio(0.01, 1.0, 100.0, 500, 2500) };
    let s0 = init_state(&cfg, &bank, d, seed)?;
    let trace = run_two_phase(&s0, &cfg, &bank, &data, Some(&teacher))?;
    println!("{:>6} {:>8} {:>10} {:>8}", "step", "m", "loss", "|c|");
    for r in &trace.records {
        println!("{:>6} {:>8.4} {:>10.6} {:>8.3}", r.step, r.m.unwrap_or(f64::NAN), r.loss, r.c_norm);
    }
    println!("rejected steps: {}", trace.rejected_steps);
    Ok(())
}
