//! Acceptance criteria and a quick invariant suite, runnable from the CLI
//! and from the `acceptance` test target.
//!
//! Each check returns a [`Report`]; `passed` requires both the numeric test
//! and the wall-clock budget.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ExperimentConfig, Grid};
use super::experiment::run_experiment;
use super::table::Table;
use crate::datagen::{make_teacher, random_unit, sample_dataset, sample_dataset_stream, Link, Stream, TeacherConfig};
use crate::error::Result;
use crate::features::{kernel, kernel_closed_form, sample_bank, Activation, FeatureBank, FeatureOperator};
use crate::hermite::{
    eval_hermite, project_to_series, relu_coeffs_closed_form, relu_decay_envelope, HermiteSeries,
    QuadratureRule,
};
use crate::landscape::{deviation_probe, uniform_grid, PopulationOracle};
use crate::model::{avoids_kinks, empirical_loss, loss_and_grads, loss_and_grads_direct, project_tangent, ModelState};
use crate::stats;
use crate::util::{self, norm};

/// Criteria that cannot pass as stated; see the crate README.
pub const KNOWN_UNATTAINABLE: &[&str] = &["1"];

/// Set to `1` to run criterion 11 on the full default grid.
pub const FULL_SWEEP_ENV: &str = "SINDEX_FULL_SWEEP";

#[derive(Debug, Clone)]
pub struct Report {
    pub id: String,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: Option<f64>,
}

impl Report {
    pub fn line(&self) -> String {
        let budget = self.budget_seconds.map(|b| format!(" / {b:.0}s")).unwrap_or_default();
        format!(
            "{} criterion {} ({}) [{:.1}s{}]: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            budget,
            self.detail
        )
    }

    pub fn known_unattainable(&self) -> bool {
        KNOWN_UNATTAINABLE.contains(&self.id.as_str())
    }
}

fn timed(id: &str, name: &'static str, budget: Option<f64>, f: impl FnOnce() -> Result<(bool, String)>) -> Report {
    let start = Instant::now();
    let (ok, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let over = budget.is_some_and(|b| seconds > b);
    let detail = if over { format!("{detail}; over time budget") } else { detail };
    Report { id: id.into(), name, passed: ok && !over, detail, seconds, budget_seconds: budget }
}

/// Every acceptance criterion, in order. `each` sees reports as they finish.
pub fn acceptance_suite(mut each: impl FnMut(&Report)) -> Vec<Report> {
    let checks: [fn() -> Report; 11] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
    ];
    checks
        .iter()
        .map(|c| {
            let r = c();
            each(&r);
            r
        })
        .collect()
}

/// Run a single criterion by number.
pub fn criterion(id: u32) -> Option<Report> {
    Some(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(),
        11 => criterion_11(),
        _ => return None,
    })
}

/// Centered ReLU `max(0, z) - 1/√(2π)` as a truncated series.
fn centered_relu(order: usize) -> HermiteSeries {
    let mut s = relu_coeffs_closed_form(order);
    let mut c = s.coeffs().to_vec();
    c[0] = 0.0;
    s = HermiteSeries::new(c).expect("finite coefficients");
    s
}

pub fn criterion_1() -> Report {
    timed("1", "Hermite exactness", Some(1.0), || {
        let order = 20;
        let exact = relu_coeffs_closed_form(order);
        let quad = project_to_series(|z| z.max(0.0), order, &QuadratureRule::piecewise_default(&[0.0]))?;
        let max_err = (0..=order).map(|j| (exact.coeff(j) - quad.coeff(j)).abs()).fold(0.0, f64::max);
        let (mut worst_j, mut worst_ratio) = (0, 0.0);
        let mut violations = 0;
        for j in 2..=order {
            let r = exact.coeff(j).abs() / relu_decay_envelope(j);
            if r > 1.0 {
                violations += 1;
            }
            if r > worst_ratio {
                worst_ratio = r;
                worst_j = j;
            }
        }
        let ok = max_err <= 1e-8 && violations == 0;
        Ok((
            ok,
            format!(
                "max |closed - quadrature| = {max_err:.2e} (tol 1e-8); decay bound violated at {violations}/19 indices, worst |α_{worst_j}| / bound = {worst_ratio:.3}"
            ),
        ))
    })
}

pub fn criterion_2() -> Report {
    timed("2", "orthonormality and derivative identity", Some(1.0), || {
        let q = QuadratureRule::gauss_hermite(64)?;
        let mut ortho = 0.0_f64;
        for i in 0..=10 {
            for j in 0..=10 {
                let v = q.expect(|z| eval_hermite(i, z) * eval_hermite(j, z));
                ortho = ortho.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        let h = 1e-5;
        let mut deriv = 0.0_f64;
        for j in 1..=10 {
            for k in 0..=40 {
                let z = -4.0 + 0.2 * k as f64;
                let fd = (eval_hermite(j, z + h) - eval_hermite(j, z - h)) / (2.0 * h);
                deriv = deriv.max((fd - (j as f64).sqrt() * eval_hermite(j - 1, z)).abs());
            }
        }
        Ok((
            ortho <= 1e-8 && deriv <= 1e-7,
            format!("max orthonormality error {ortho:.2e} (tol 1e-8); max derivative error {deriv:.2e} (tol 1e-7)"),
        ))
    })
}

/// Relative errors `(c, θ)` of analytic against central-difference gradients.
pub fn gradient_fd_errors(state: &ModelState, bank: &FeatureBank, data: &crate::datagen::Dataset, lambda: f64, h: f64) -> Result<(f64, f64)> {
    let lg = loss_and_grads(state, bank, data, lambda)?;
    let mut fd_c = vec![0.0; state.c.len()];
    for (i, g) in fd_c.iter_mut().enumerate() {
        let mut p = state.clone();
        p.c[i] += h;
        let mut m = state.clone();
        m.c[i] -= h;
        *g = (empirical_loss(&p, bank, data, lambda)? - empirical_loss(&m, bank, data, lambda)?) / (2.0 * h);
    }
    let sph = lg.grad_theta_spherical(&state.theta);
    let d = state.theta.len();
    let mut fd_t = vec![0.0; d];
    for (i, g) in fd_t.iter_mut().enumerate() {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let v = project_tangent(&state.theta, &e);
        let moved = |t: f64| -> Result<f64> {
            let th: Vec<f64> = state.theta.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            let s = ModelState::normalized(state.c.clone(), th)?;
            empirical_loss(&s, bank, data, lambda)
        };
        *g = (moved(h)? - moved(-h)?) / (2.0 * h);
    }
    let rel = |a: &[f64], b: &[f64]| {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&diff) / norm(a).max(1e-12)
    };
    Ok((rel(&lg.grad_c, &fd_c), rel(&sph, &fd_t)))
}

fn gradient_instance(seed: u64, activation: Activation) -> Result<(ModelState, FeatureBank, crate::datagen::Dataset)> {
    let d = 5;
    let bank = sample_bank(16, 2.0, seed, activation)?;
    let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), d, seed)?;
    let data = sample_dataset(&teacher, 64, d, seed)?;
    let mut rng = util::rng(seed, 100);
    let c: Vec<f64> = (0..bank.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let theta = random_unit(d, &mut rng);
    Ok((ModelState::new(c, theta)?, bank, data))
}

pub fn criterion_3() -> Report {
    timed("3", "gradient correctness", Some(30.0), || {
        let (mut worst_c, mut worst_t) = (0.0_f64, 0.0_f64);
        for seed in 0..20 {
            let (s, b, d) = gradient_instance(seed, Activation::SmoothedRelu { rho: 0.8 })?;
            let (ec, et) = gradient_fd_errors(&s, &b, &d, 0.01, 1e-5)?;
            worst_c = worst_c.max(ec);
            worst_t = worst_t.max(et);
        }
        let (mut relu_c, mut relu_t, mut found, mut seed) = (0.0_f64, 0.0_f64, 0, 1000);
        while found < 20 && seed < 2000 {
            let (s, b, d) = gradient_instance(seed, Activation::Relu)?;
            seed += 1;
            if !avoids_kinks(&s, &b, &d, 1e-3) {
                continue;
            }
            found += 1;
            let (ec, et) = gradient_fd_errors(&s, &b, &d, 0.01, 1e-6)?;
            relu_c = relu_c.max(ec);
            relu_t = relu_t.max(et);
        }
        let ok = found == 20 && worst_c.max(worst_t).max(relu_c).max(relu_t) <= 1e-5;
        Ok((
            ok,
            format!(
                "smoothed: rel err c {worst_c:.1e}, θ {worst_t:.1e}; ReLU ({found} kink-free instances): c {relu_c:.1e}, θ {relu_t:.1e} (tol 1e-5)"
            ),
        ))
    })
}

pub fn criterion_4() -> Report {
    timed("4", "population oracle vs Monte Carlo", Some(120.0), || {
        let (d, n, nf, lambda, sigma) = (10, 1_000_000, 20, 0.01, 0.1);
        let cfg = TeacherConfig::new(Link::CustomSeries { coeffs: vec![0.0, 0.6, 0.5, 0.4, 0.3] }).with_sigma(sigma);
        let teacher = make_teacher(&cfg, d, 4)?;
        let bank = sample_bank(nf, 2.0, 4, Activation::Relu)?;
        let op = FeatureOperator::new(&bank, 8, lambda)?;
        let oracle = PopulationOracle::new(teacher.series(), op, sigma)?;
        let data = sample_dataset_stream(&teacher, n, d, 4, Stream::Probe)?;
        let ts = teacher.theta_star().to_vec();
        let mut rng = util::rng(4, 101);
        let (mut worst, mut comparisons) = (0.0_f64, 0);
        let mut phi = vec![0.0; nf];
        for _ in 0..10 {
            let m: f64 = rng.random_range(-0.95..0.95);
            let r: f64 = rng.random_range(0.5..3.0);
            let c: Vec<f64> = random_unit(nf, &mut rng).into_iter().map(|v| v * r).collect();
            let perp = {
                let v = random_unit(d, &mut rng);
                let p = project_tangent(&ts, &v);
                let k = norm(&p);
                p.into_iter().map(|x| x / k).collect::<Vec<_>>()
            };
            let theta: Vec<f64> = ts.iter().zip(&perp).map(|(a, b)| m * a + (1.0 - m * m).sqrt() * b).collect();
            // Tangent unit direction toward θ*, along which the spherical
            // gradient is nonzero.
            let w: Vec<f64> = {
                let p = project_tangent(&theta, &ts);
                let k = norm(&p);
                p.into_iter().map(|x| x / k).collect()
            };
            let (pgc, _) = oracle.population_grads(&c, m)?;
            let pop_loss = oracle.population_loss(&c, m)?;
            let u_dir = pgc.normalize();
            let pop_gc = pgc.dot(&u_dir);
            let pop_gt = util::dot(&oracle.spherical_theta_grad(&c, &theta, &ts)?, &w);
            let u = data.project(&theta);
            let uw = data.project(&w);
            let reg = lambda * util::dot(&c, &c);
            let reg_gc = 2.0 * lambda * c.iter().zip(u_dir.iter()).map(|(a, b)| a * b).sum::<f64>();
            let mut ls = Vec::with_capacity(n);
            let mut gcs = Vec::with_capacity(n);
            let mut gts = Vec::with_capacity(n);
            for i in 0..n {
                let (g, dg) = bank.eval_with_derivative(&c, u[i]);
                let res = g - data.ys()[i];
                bank.phi_into(u[i], &mut phi);
                let pu: f64 = phi.iter().zip(u_dir.iter()).map(|(a, b)| a * b).sum();
                ls.push(res * res + reg);
                gcs.push(2.0 * res * pu + reg_gc);
                gts.push(2.0 * res * dg * uw[i]);
            }
            for (samples, target) in [(&ls, pop_loss), (&gcs, pop_gc), (&gts, pop_gt)] {
                let (mean, se) = stats::mean_se(samples);
                worst = worst.max((mean - target).abs() / se);
                comparisons += 1;
            }
        }
        Ok((worst <= 3.0, format!("{comparisons} comparisons, worst |MC - oracle| = {worst:.2} SE (tol 3)")))
    })
}

pub fn criterion_5() -> Report {
    timed("5", "landscape shape", Some(60.0), || {
        let series = centered_relu(64);
        let series = series.scaled(1.0 / series.norm());
        let bank = sample_bank(512, 2.0, 5, Activation::Relu)?;
        let op = FeatureOperator::new(&bank, 64, 1e-3)?;
        let oracle = PopulationOracle::new(&series, op, 0.0)?;
        let grid = uniform_grid(-1.0, 1.0, 101);
        let rows = oracle.scan(&grid)?;
        let mut bad = 0;
        for w in rows.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            // Moving away from m = 0 must lower the loss.
            let away = if b.m > 0.0 && a.m >= 0.0 { b.loss < a.loss } else if a.m < 0.0 && b.m <= 0.0 { a.loss < b.loss } else { true };
            if !away {
                bad += 1;
            }
        }
        let inner = uniform_grid(0.05, 0.95, 181);
        let res: Vec<f64> = inner.iter().map(|&m| oracle.critical_residual(m)).collect::<Result<_>>()?;
        let changes = res.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        Ok((
            bad == 0 && changes == 0,
            format!(
                "{bad} non-monotone steps on the 101-point grid; {changes} residual sign changes in (0.05, 0.95), residual range [{:.3e}, {:.3e}]",
                res.iter().cloned().fold(f64::INFINITY, f64::min),
                res.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            ),
        ))
    })
}

/// `tr(Σ̂)` of a ReLU bank from the Gram diagonal.
pub fn relu_bank_trace(bank: &FeatureBank) -> f64 {
    let n = bank.len() as f64;
    bank.biases()
        .iter()
        .zip(bank.signs())
        .map(|(&b, &e)| crate::features::operator::relu_pair_inner(b, e, b, e))
        .sum::<f64>()
        / n
}

pub fn criterion_6() -> Report {
    timed("6", "trace of the feature covariance", Some(30.0), || {
        let tau: f64 = 2.0;
        let traces: Vec<f64> =
            (0..200).map(|s| sample_bank(512, tau, 6000 + s, Activation::Relu).map(|b| relu_bank_trace(&b))).collect::<Result<_>>()?;
        let (mean, _) = stats::mean_se(&traces);
        let target = (1.0 + tau * tau) / 2.0;
        let below = traces.iter().filter(|&&t| t <= tau * tau + 0.5).count();
        let ok = (mean / target - 1.0).abs() <= 0.02 && below as f64 >= 0.99 * traces.len() as f64;
        Ok((ok, format!("mean tr = {mean:.4} vs {target} ({:+.2}%); {below}/200 banks below τ² + 1/2", 100.0 * (mean / target - 1.0))))
    })
}

/// `(Tf, ‖f‖²)` for the centered ReLU target, in closed form.
pub fn centered_relu_target(bank: &FeatureBank) -> (DVector<f64>, f64) {
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let scale = 1.0 / (bank.len() as f64).sqrt();
    let tf = bank
        .biases()
        .iter()
        .zip(bank.signs())
        .map(|(&b, &e)| {
            let cross = crate::features::operator::relu_pair_inner(b, e, 0.0, 1.0);
            let mean = crate::hermite::gaussian_pdf(b) - b * 0.5 * libm::erfc(b / std::f64::consts::SQRT_2);
            scale * (cross - inv * mean)
        })
        .collect::<Vec<_>>();
    (DVector::from_vec(tf), 0.5 - 1.0 / (2.0 * std::f64::consts::PI))
}

pub fn criterion_7() -> Report {
    timed("7", "ReLU target approximation rate", Some(120.0), || {
        let bank = sample_bank(2048, 2.0, 7, Activation::Relu)?;
        let base = FeatureOperator::new(&bank, 2, 0.1)?;
        let (tf, norm_sq) = centered_relu_target(&bank);
        let lambdas = [0.1, 0.03, 0.01, 0.003];
        let res: Vec<f64> = lambdas
            .iter()
            .map(|&l| base.with_lambda(l).and_then(|op| op.project_target(&tf, norm_sq)).map(|p| p.residual_sq))
            .collect::<Result<_>>()?;
        let slope = stats::loglog_slope(&lambdas, &res);
        Ok((
            slope >= 0.6,
            format!(
                "residual² = [{}], log-log slope {slope:.3} (need >= 0.6)",
                res.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
            ),
        ))
    })
}

fn study(s: Vec<usize>, n: Vec<usize>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default_study();
    cfg.grid = Grid { d: vec![10], s, n, n_features: vec![100], lambda: vec![0.01], lambda_ft: vec![1e-4], step_theta: vec![1.0] };
    cfg
}

fn run_values(t: &Table, s: &str, n: &str, col: &str) -> Vec<f64> {
    (0..t.len())
        .filter(|&i| t.get(i, "kind") == Some("run") && t.get(i, "s") == Some(s) && t.get(i, "n") == Some(n))
        .map(|i| t.get_f64(i, col).unwrap_or(f64::NAN))
        .collect()
}

pub fn criterion_8() -> Report {
    timed("8", "end-to-end recovery", Some(900.0), || {
        let out = run_experiment(&study(vec![1, 3], vec![8192]), false, true)?;
        let m1 = run_values(&out.results, "1", "8192", "m_abs");
        let m3 = run_values(&out.results, "3", "8192", "m_abs");
        let rate = |m: &[f64]| m.iter().filter(|v| **v >= 0.95).count();
        let (r1, r3) = (rate(&m1), rate(&m3));
        let best3 = m3.iter().cloned().fold(f64::NAN, f64::max);
        let ok = r1 >= 7 && best3 >= 0.9 && r3 < r1;
        Ok((
            ok,
            format!(
                "s=1: {r1}/10 seeds with |m| >= 0.95; s=3: best |m| = {best3:.3}, {r3}/10 seeds with |m| >= 0.95; {} failed runs",
                out.failures()
            ),
        ))
    })
}

pub fn criterion_9() -> Report {
    timed("9", "excess-risk monotonicity", Some(1200.0), || {
        let ns = ["1024", "4096", "16384"];
        let out = run_experiment(&study(vec![1], vec![1024, 4096, 16384]), false, true)?;
        let mean = |n: &str, col: &str| {
            let v = run_values(&out.results, "1", n, col);
            v.iter().sum::<f64>() / v.len() as f64
        };
        let post: Vec<f64> = ns.iter().map(|n| mean(n, "risk_post")).collect();
        let pre: Vec<f64> = ns.iter().map(|n| mean(n, "risk_pre")).collect();
        let decreasing = post.windows(2).all(|w| w[1] < w[0]);
        let improved = post.iter().zip(&pre).all(|(a, b)| a <= b);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
        Ok((
            decreasing && improved && out.failures() == 0,
            format!("mean risk before fine-tuning [{}], after [{}] at n = 2^10, 2^12, 2^14", fmt(&pre), fmt(&post)),
        ))
    })
}

pub fn criterion_10() -> Report {
    timed("10", "concentration scaling", Some(600.0), || {
        let d = 10;
        let bank = sample_bank(100, 2.0, 10, Activation::Relu)?;
        let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), d, 10)?;
        let op = FeatureOperator::new(&bank, teacher.series().order(), 0.01)?;
        let oracle = PopulationOracle::new(teacher.series(), op, teacher.sigma())?;
        let ns: Vec<usize> = (10..=14).map(|k| 1usize << k).collect();
        let probe = deviation_probe(&oracle, &bank, &teacher, &ns, 200, 5.0, 10)?;
        let devs = probe.rows.iter().map(|r| format!("{:.3e}", r.max_dev_theta)).collect::<Vec<_>>().join(", ");
        Ok((
            (probe.slope_theta + 0.5).abs() <= 0.2,
            format!("max θ-gradient deviation [{devs}], log-log slope {:.3} (target -0.5 ± 0.2)", probe.slope_theta),
        ))
    })
}

/// Config for criterion 11 and whether it is the full default grid.
pub fn determinism_config() -> (ExperimentConfig, bool) {
    let full = std::env::var(FULL_SWEEP_ENV).is_ok_and(|v| v == "1");
    let mut cfg = ExperimentConfig::default_study();
    if !full {
        cfg.grid.d = vec![10];
        cfg.grid.s = vec![1, 3];
        cfg.grid.n = vec![512, 2048];
        cfg.seeds = 3;
    }
    (cfg, full)
}

pub fn criterion_11() -> Report {
    timed("11", "determinism", None, || {
        let (mut cfg, full) = determinism_config();
        let root = std::env::temp_dir().join(format!("sindex-determinism-{}", std::process::id()));
        let mut bytes = Vec::new();
        for tag in ["a", "b"] {
            cfg.output_dir = root.join(tag);
            run_experiment(&cfg, true, true)?;
            bytes.push(std::fs::read(cfg.output_dir.join("results.csv"))?);
        }
        let _ = std::fs::remove_dir_all(&root);
        let scope = if full {
            "full default grid".to_string()
        } else {
            format!(
                "REDUCED grid ({} cells x {} seeds; set {FULL_SWEEP_ENV}=1 for the full default grid)",
                cfg.cells().len(),
                cfg.seeds
            )
        };
        let same = bytes[0] == bytes[1];
        Ok((same, format!("{scope}: results.csv {} ({} bytes)", if same { "byte-identical" } else { "differs" }, bytes[0].len())))
    })
}

/// Fast properties that should hold for any seed.
pub fn invariant_suite(mut each: impl FnMut(&Report)) -> Vec<Report> {
    let checks: [fn() -> Report; 8] = [
        inv_ou_semigroup,
        inv_kernel_closed_form,
        inv_relu_fast_path,
        inv_rotation,
        inv_loss_decomposition,
        inv_gram_psd,
        inv_teacher_normalization,
        inv_stream_determinism,
    ];
    checks
        .iter()
        .map(|c| {
            let r = c();
            each(&r);
            r
        })
        .collect()
}

fn inv_ou_semigroup() -> Report {
    timed("I1", "OU semigroup", Some(5.0), || {
        let mut rng = util::rng(1, 200);
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let s = HermiteSeries::new((0..20).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())?;
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let lhs = s.ou_transform(a)?.ou_transform(b)?;
            let rhs = s.ou_transform(a * b)?;
            worst = worst.max(lhs.coeffs().iter().zip(rhs.coeffs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        Ok((worst < 1e-12, format!("max |U_a U_b - U_ab| = {worst:.1e}")))
    })
}

fn inv_kernel_closed_form() -> Report {
    timed("I2", "kernel closed form vs quadrature", Some(5.0), || {
        let mut worst = 0.0_f64;
        for &(u, v) in &[(0.0, 0.0), (1.0, -0.5), (2.3, 1.7), (-3.0, 0.4)] {
            worst = worst.max((kernel(2.0, Activation::Relu, u, v)? - kernel_closed_form(2.0, u, v)?).abs());
        }
        Ok((worst < 1e-9, format!("max difference {worst:.1e}")))
    })
}

fn inv_relu_fast_path() -> Report {
    timed("I3", "ReLU fast path equals direct evaluation", Some(5.0), || {
        let mut worst = 0.0_f64;
        for seed in 0..10 {
            let (s, b, d) = gradient_instance(seed, Activation::Relu)?;
            let fast = loss_and_grads(&s, &b, &d, 0.01)?;
            let slow = loss_and_grads_direct(&s, &b, &d, 0.01)?;
            worst = worst.max((fast.loss - slow.loss).abs());
            for (x, y) in fast.grad_c.iter().chain(&fast.grad_theta_euclid).zip(slow.grad_c.iter().chain(&slow.grad_theta_euclid)) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok((worst < 1e-10, format!("max difference {worst:.1e}")))
    })
}

fn inv_rotation() -> Report {
    timed("I4", "rotation equivariance of the loss", Some(5.0), || {
        let mut worst = 0.0_f64;
        for seed in 0..5 {
            let (s, b, data) = gradient_instance(seed, Activation::Relu)?;
            let d = s.dim();
            // Householder reflection I - 2vvᵀ.
            let v = random_unit(d, &mut util::rng(seed, 201));
            let reflect = |x: &[f64]| {
                let a = 2.0 * util::dot(x, &v);
                x.iter().zip(&v).map(|(xi, vi)| xi - a * vi).collect::<Vec<f64>>()
            };
            let mut xs = data.xs().clone();
            for i in 0..data.len() {
                let r = reflect(&data.row(i));
                for (j, val) in r.into_iter().enumerate() {
                    xs[(i, j)] = val;
                }
            }
            let rotated = crate::datagen::Dataset::from_parts(xs, data.ys().to_vec())?;
            let s2 = ModelState::new(s.c.clone(), reflect(&s.theta))?;
            let l1 = empirical_loss(&s, &b, &data, 0.01)?;
            let l2 = empirical_loss(&s2, &b, &rotated, 0.01)?;
            worst = worst.max((l1 - l2).abs());
        }
        Ok((worst < 1e-10, format!("max loss change {worst:.1e}")))
    })
}

fn inv_loss_decomposition() -> Report {
    timed("I5", "projected loss equals loss at the optimal c", Some(5.0), || {
        let bank = sample_bank(40, 2.0, 3, Activation::Relu)?;
        let teacher = make_teacher(&TeacherConfig::new(Link::default_piecewise()), 5, 3)?;
        let op = FeatureOperator::new(&bank, 64, 0.01)?;
        let oracle = PopulationOracle::new(teacher.series(), op, teacher.sigma())?;
        let mut worst = 0.0_f64;
        for &m in &[-0.9, -0.3, 0.0, 0.2, 0.7, 1.0] {
            let (lbar, c) = oracle.projected_population_loss(m)?;
            worst = worst.max((oracle.population_loss(c.as_slice(), m)? - lbar).abs());
            let (gc, _) = oracle.population_grads(c.as_slice(), m)?;
            worst = worst.max(gc.norm());
        }
        Ok((worst < 1e-10, format!("max deviation {worst:.1e}")))
    })
}

fn inv_gram_psd() -> Report {
    timed("I6", "Gram matrices are symmetric PSD", Some(10.0), || {
        let mut min_eig = f64::INFINITY;
        for seed in 0..5 {
            let bank = sample_bank(64, 2.0, seed, Activation::Relu)?;
            let op = FeatureOperator::new(&bank, 8, 0.01)?;
            let e = op.gram().clone().symmetric_eigen();
            min_eig = min_eig.min(e.eigenvalues.min());
        }
        Ok((min_eig > -1e-10, format!("smallest eigenvalue {min_eig:.1e}")))
    })
}

fn inv_teacher_normalization() -> Report {
    timed("I7", "stripped teachers are unit norm with exponent s", Some(5.0), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for s in 1..=3 {
            let t = make_teacher(&TeacherConfig::new(Link::stripped(Link::default_piecewise(), s)), 5, 0)?;
            let q = QuadratureRule::piecewise_default(&[-2.0, -1.0, 0.5, 2.0]);
            let norm_sq = q.expect(|z| t.eval(z).powi(2));
            let ie = t.information_exponent()?;
            ok &= ie == s && (norm_sq - 1.0).abs() < 1e-8;
            parts.push(format!("s={s}: exponent {ie}, ‖f‖² = {norm_sq:.10}"));
        }
        Ok((ok, parts.join("; ")))
    })
}

fn inv_stream_determinism() -> Report {
    timed("I8", "seeded streams are reproducible and distinct", Some(5.0), || {
        let t = make_teacher(&TeacherConfig::new(Link::default_piecewise()), 4, 9)?;
        let a = sample_dataset(&t, 50, 4, 9)?;
        let b = sample_dataset(&t, 50, 4, 9)?;
        let f = sample_dataset_stream(&t, 50, 4, 9, Stream::FineTune)?;
        let same = a.xs() == b.xs() && a.ys() == b.ys();
        let distinct = a.xs() != f.xs();
        Ok((same && distinct, format!("repeat identical: {same}; train vs fine-tune distinct: {distinct}")))
    })
}
