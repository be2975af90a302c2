//! Train, then refit the outer layer by ridge regression on fresh data and
//! compare held-out excess risk.

use sindex::datagen::{make_teacher, sample_dataset, sample_dataset_stream, Link, Stream, TeacherConfig};
use sindex::features::{sample_bank, Activation};
use sindex::model::ModelState;
use sindex::train::{excess_risk, fine_tune_ridge, init_state, run_two_phase, TrainConfig};

fn main() -> sindex::Result<()> {
    let (d, n, seed) = (10, 4096, 1);
    let bank = sample_bank(100, 2.0, seed, Activation::Relu)?;
    let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), d, seed)?;
    let data = sample_dataset(&teacher, n, d, seed)?;
    let cfg = TrainConfig { seed, ..TrainConfig::with_ratio(0.01, 1.0, 100.0, 500, 2500) };
    let trace = run_two_phase(&init_state(&cfg, &bank, d, seed)?, &cfg, &bank, &data, Some(&teacher))?;
    let trained = trace.final_state;
    let fresh = sample_dataset_stream(&teacher, n, d, seed, Stream::FineTune)?;
    let before = excess_risk(&trained, &bank, &teacher, 10_000, seed)?;
    println!("|m| = {:.4}, risk before fine-tuning {:.4} ± {:.4}", trained.overlap(teacher.theta_star()).abs(), before.mean, before.se);
    for lambda in [1e-2, 1e-3, 1e-4] {
        let c = fine_tune_ridge(&trained.theta, &bank, &fresh, lambda)?;
        let tuned = ModelState { c, theta: trained.theta.clone() };
        let after = excess_risk(&tuned, &bank, &teacher, 10_000, seed)?;
        println!("λ' = {lambda:e}: risk after {:.4} ± {:.4}", after.mean, after.se);
    }
    Ok(())
}
