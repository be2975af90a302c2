//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numeric failures
//! (including failed checks).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::check::{self, Report};
use super::config::{Cell, ExperimentConfig};
use super::experiment::run_experiment;
use super::plot::{emit_plot, PlotKind};
use super::table::Table;
use crate::datagen::{make_teacher, sample_dataset, sample_dataset_stream, Stream, TeacherSpec};
use crate::error::{Error, Result};
use crate::features::{sample_bank, FeatureBank, FeatureOperator};
use crate::hermite::{project_to_series, relu_coeffs_closed_form, QuadratureRule};
use crate::landscape::{uniform_grid, PopulationOracle};
use crate::model::ModelState;
use crate::train::{excess_risk, fine_tune_ridge, init_state, run_two_phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Acceptance,
    Invariants,
    All,
}

#[derive(Debug, Parser)]
#[command(name = "sindex", version, about = "Single-index learning with frozen-bias ReLU features")]
pub struct Cli {
    /// Experiment config (TOML or JSON); supplies defaults for every subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Problem settings; unset values come from the first grid entry of the
/// config (or the default study).
#[derive(Debug, Clone, Args)]
pub struct Problem {
    #[arg(long)]
    pub d: Option<usize>,
    /// Strip the teacher link to information exponent `s`.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "n-features")]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-phase gradient descent on one seed; writes the trace and final state.
    Train {
        #[command(flatten)]
        problem: Problem,
        #[arg(long)]
        step_theta: Option<f64>,
        #[arg(long)]
        t0: Option<usize>,
        #[arg(long)]
        t1: Option<usize>,
    },
    /// Ridge refit of `c` on a fresh sample at a trained direction.
    Finetune {
        #[command(flatten)]
        problem: Problem,
        /// Model state JSON written by `train`.
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        lambda_ft: Option<f64>,
        /// Fine-tuning sample size (defaults to `n`).
        #[arg(long)]
        n_finetune: Option<usize>,
    },
    /// Population landscape scan over `m ∈ [-1, 1]`.
    Landscape {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = crate::landscape::DEFAULT_GRID)]
        m_grid: usize,
    },
    /// Full seeded sweep; writes results.csv, timings.csv and SVG plots.
    Experiment,
    /// Plot a results, landscape or trace CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
    /// Hermite coefficients α_0..α_J.
    Hermite {
        /// Closed-form ReLU coefficients.
        #[arg(long)]
        relu: bool,
        #[arg(long, default_value_t = 8)]
        max_order: usize,
    },
    /// Acceptance criteria and invariants.
    Check {
        #[arg(long, value_enum, default_value_t = Suite::Acceptance)]
        suite: Suite,
        /// Run only this acceptance criterion.
        #[arg(long)]
        only: Option<u32>,
    },
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidParameter(_) | Error::Toml(_) | Error::MissingColumns(_) => 1,
                _ => 2,
            }
        }
    }
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_study(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn resolve_cell(cfg: &ExperimentConfig, p: &Problem) -> Result<Cell> {
    let g = &cfg.grid;
    let cell = Cell {
        index: 0,
        d: p.d.unwrap_or(g.d[0]),
        s: p.s.unwrap_or(g.s[0]),
        n: p.n.unwrap_or(g.n[0]),
        n_features: p.n_features.unwrap_or(g.n_features[0]),
        lambda: p.lambda.unwrap_or(g.lambda[0]),
        lambda_ft: g.lambda_ft[0],
        step_theta: g.step_theta[0],
    };
    if cell.d < 2 || cell.s == 0 || cell.n == 0 || cell.n_features == 0 || !(cell.lambda > 0.0) {
        return Err(Error::InvalidParameter("need d >= 2, s >= 1, n >= 1, N >= 1 and lambda > 0".into()));
    }
    Ok(cell)
}

fn setup(cfg: &mut ExperimentConfig, p: &Problem, seed: u64) -> Result<(Cell, FeatureBank, TeacherSpec)> {
    if let Some(t) = p.tau {
        cfg.tau = t;
    }
    let cell = resolve_cell(cfg, p)?;
    let bank = sample_bank(cell.n_features, cfg.tau, seed, cfg.activation)?;
    let teacher = make_teacher(&cfg.teacher_for(&cell), cell.d, seed)?;
    if let Some(w) = teacher.tail_warning() {
        eprintln!("warning: {w}");
    }
    Ok((cell, bank, teacher))
}

fn emit(cli: &Cli, table: &Table, file: &str) -> Result<()> {
    let text = match cli.format {
        Format::Csv => table.to_csv_string()?,
        Format::Json => table.to_json()? + "\n",
    };
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ext = if cli.format == Format::Csv { "csv" } else { "json" };
            let path = dir.join(format!("{file}.{ext}"));
            std::fs::write(&path, text)?;
            if !cli.quiet {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn plot_into(table: &Table, kind: PlotKind, dir: &Path, quiet: bool) -> Result<()> {
    match emit_plot(table, kind, dir)? {
        Some(p) if !quiet => eprintln!("wrote {}", p.display()),
        None => eprintln!("nothing to plot for {kind}"),
        _ => {}
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Hermite { relu, max_order } => {
            let series = if *relu {
                relu_coeffs_closed_form(*max_order)
            } else {
                project_to_series(|z| z.max(0.0), *max_order, &QuadratureRule::piecewise_default(&[0.0]))?
            };
            let mut t = Table::new(&["j", "alpha"]);
            for (j, a) in series.coeffs().iter().enumerate() {
                t.push(vec![j.to_string(), a.to_string()]);
            }
            emit(cli, &t, "hermite")?;
            Ok(0)
        }
        Command::Landscape { problem, m_grid } => {
            if *m_grid < 2 {
                return Err(Error::InvalidParameter("--m-grid needs at least 2 points".into()));
            }
            let mut cfg = base_config(cli)?;
            let (cell, bank, teacher) = setup(&mut cfg, problem, cli.seed)?;
            let op = FeatureOperator::new(&bank, teacher.series().order(), cell.lambda)?;
            let oracle = PopulationOracle::new(teacher.series(), op, teacher.sigma())?;
            let rows = oracle.scan(&uniform_grid(-1.0, 1.0, *m_grid))?;
            let mut t = Table::new(&["m", "loss", "residual", "grad_theta"]);
            for r in &rows {
                t.push(vec![r.m.to_string(), r.loss.to_string(), r.residual.to_string(), r.grad_theta.to_string()]);
            }
            emit(cli, &t, "landscape")?;
            if let Some(dir) = &cli.out {
                plot_into(&t, PlotKind::LandscapeScan, dir, cli.quiet)?;
            }
            Ok(0)
        }
        Command::Train { problem, step_theta, t0, t1 } => {
            let mut cfg = base_config(cli)?;
            if let Some(v) = t0 {
                cfg.train.t0_steps = *v;
            }
            if let Some(v) = t1 {
                cfg.train.t1_steps = *v;
            }
            let (cell, bank, teacher) = setup(&mut cfg, problem, cli.seed)?;
            let data = sample_dataset(&teacher, cell.n, cell.d, cli.seed)?;
            let tc = cfg.train.config(cell.lambda, step_theta.unwrap_or(cell.step_theta), cell.s, cli.seed);
            let s0 = init_state(&tc, &bank, cell.d, cli.seed)?;
            let trace = run_two_phase(&s0, &tc, &bank, &data, Some(&teacher))?;
            let mut csv = Vec::new();
            trace.write_csv(&mut csv)?;
            let t = Table::from_reader(csv.as_slice())?;
            emit(cli, &t, "trace")?;
            if let Some(dir) = &cli.out {
                std::fs::write(dir.join("state.json"), trace.final_state.to_json()?)?;
                plot_into(&t, PlotKind::Trace, dir, cli.quiet)?;
            }
            if !cli.quiet {
                eprintln!(
                    "final |m| = {:.4}, loss = {:.6}, rejected steps = {}",
                    trace.final_overlap().unwrap_or(f64::NAN).abs(),
                    trace.final_loss(),
                    trace.rejected_steps
                );
            }
            Ok(0)
        }
        Command::Finetune { problem, state, lambda_ft, n_finetune } => {
            let mut cfg = base_config(cli)?;
            let (cell, bank, teacher) = setup(&mut cfg, problem, cli.seed)?;
            let st = ModelState::from_json(&std::fs::read_to_string(state)?)?;
            let n_ft = n_finetune.or(cfg.n_finetune).unwrap_or(cell.n);
            let lam = lambda_ft.unwrap_or(cell.lambda_ft);
            let fresh = sample_dataset_stream(&teacher, n_ft, cell.d, cli.seed, Stream::FineTune)?;
            let c = fine_tune_ridge(&st.theta, &bank, &fresh, lam)?;
            let pre = excess_risk(&st, &bank, &teacher, cfg.n_test, cli.seed)?;
            let tuned = ModelState { c, theta: st.theta.clone() };
            let post = excess_risk(&tuned, &bank, &teacher, cfg.n_test, cli.seed)?;
            let mut t = Table::new(&["m_abs", "risk_pre", "risk_pre_se", "risk_post", "risk_post_se"]);
            t.push(vec![
                st.overlap(teacher.theta_star()).abs().to_string(),
                pre.mean.to_string(),
                pre.se.to_string(),
                post.mean.to_string(),
                post.se.to_string(),
            ]);
            emit(cli, &t, "finetune")?;
            if let Some(dir) = &cli.out {
                std::fs::write(dir.join("state_finetuned.json"), tuned.to_json()?)?;
            }
            Ok(0)
        }
        Command::Experiment => {
            let mut cfg = base_config(cli)?;
            cfg.base_seed = cfg.base_seed.wrapping_add(cli.seed);
            let out = run_experiment(&cfg, true, cli.quiet)?;
            if cli.format == Format::Json {
                std::fs::write(cfg.output_dir.join("results.json"), out.results.to_json()?)?;
            }
            for kind in [PlotKind::RiskVsN, PlotKind::MVsN] {
                plot_into(&out.results, kind, &cfg.output_dir, cli.quiet)?;
            }
            if !cli.quiet {
                eprintln!(
                    "{} runs, {} failed; results in {}",
                    out.outcomes.len(),
                    out.failures(),
                    cfg.output_dir.join("results.csv").display()
                );
            }
            Ok(0)
        }
        Command::Plot { input, kind } => {
            let t = Table::read_csv(input)?;
            let dir = cli.out.clone().unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            plot_into(&t, *kind, &dir, cli.quiet)?;
            Ok(0)
        }
        Command::Check { suite, only } => {
            let print = |r: &Report| println!("{}", r.line());
            let reports = match (suite, only) {
                (_, Some(id)) => {
                    let r = check::criterion(*id)
                        .ok_or_else(|| Error::InvalidParameter(format!("no acceptance criterion {id}")))?;
                    print(&r);
                    vec![r]
                }
                (Suite::Acceptance, None) => check::acceptance_suite(print),
                (Suite::Invariants, None) => check::invariant_suite(print),
                (Suite::All, None) => {
                    let mut v = check::invariant_suite(print);
                    v.extend(check::acceptance_suite(print));
                    v
                }
            };
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed", reports.len() - failed, reports.len());
            Ok(if failed == 0 { 0 } else { 2 })
        }
    }
}
