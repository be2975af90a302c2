//! Seeded sweeps over an [`ExperimentConfig`] grid.
//!
//! Every `(cell, seed)` run is a pure function of the config, the cell and
//! the seed, so `results.csv` is byte-identical across reruns regardless of
//! the worker count. Wall times go to a separate `timings.csv`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Cell, ExperimentConfig, ReportMode};
use super::table::Table;
use crate::datagen::{make_teacher, sample_dataset, sample_dataset_stream, Stream};
use crate::error::{Error, Result};
use crate::features::sample_bank;
use crate::model::ModelState;
use crate::stats;
use crate::train::{excess_risk, fine_tune_ridge, init_state, run_two_phase, TrainTrace};

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 21] = [
    "kind",
    "cell",
    "d",
    "s",
    "n",
    "N",
    "lambda",
    "lambda_ft",
    "step_theta",
    "seed",
    "status",
    "m_abs",
    "m_abs_std",
    "risk_pre",
    "risk_pre_std",
    "risk_post",
    "risk_post_std",
    "train_loss",
    "train_loss_std",
    "success_rate",
    "n_ok",
];

pub const TIMING_COLUMNS: [&str; 3] = ["cell", "seed", "wall_seconds"];

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SINDEX_THREADS";

/// Metrics of one successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub m_abs: f64,
    pub risk_pre: f64,
    pub risk_post: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub cell: Cell,
    pub seed: u64,
    /// Error text for failed runs.
    pub result: std::result::Result<RunMetrics, String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub results: Table,
    pub timings: Table,
    pub outcomes: Vec<RunOutcome>,
    pub results_path: Option<PathBuf>,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }
}

/// Train, fine-tune and evaluate one seed of one cell.
///
/// The seed drives the bank, the teacher direction, every dataset and the
/// initial state, each through its own stream.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<(RunMetrics, TrainTrace)> {
    let bank = sample_bank(cell.n_features, config.tau, seed, config.activation)?;
    let teacher = make_teacher(&config.teacher_for(cell), cell.d, seed)?;
    let data = sample_dataset(&teacher, cell.n, cell.d, seed)?;
    let tc = config.train.config(cell.lambda, cell.step_theta, cell.s, seed);
    let s0 = init_state(&tc, &bank, cell.d, seed)?;
    let trace = run_two_phase(&s0, &tc, &bank, &data, Some(&teacher))?;
    let state = &trace.final_state;
    let n_ft = config.n_finetune.unwrap_or(cell.n);
    let fresh = sample_dataset_stream(&teacher, n_ft, cell.d, seed, Stream::FineTune)?;
    let c = fine_tune_ridge(&state.theta, &bank, &fresh, cell.lambda_ft)?;
    let pre = excess_risk(state, &bank, &teacher, config.n_test, seed)?;
    let tuned = ModelState { c, theta: state.theta.clone() };
    let post = excess_risk(&tuned, &bank, &teacher, config.n_test, seed)?;
    let metrics = RunMetrics {
        m_abs: state.overlap(teacher.theta_star()).abs(),
        risk_pre: pre.mean,
        risk_post: post.mean,
        train_loss: trace.final_loss(),
    };
    Ok((metrics, trace))
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&t: &usize| t > 0)
}

/// Run the whole grid. Failed runs become `failed` rows; the sweep itself
/// only errors on an invalid config or an unwritable output directory.
///
/// With `write` set, `results.csv` and `timings.csv` land in
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig, write: bool, quiet: bool) -> Result<ExperimentOutput> {
    config.validate()?;
    let out_dir = &config.output_dir;
    if write {
        std::fs::create_dir_all(out_dir)?;
        if config.save_traces {
            std::fs::create_dir_all(out_dir.join("traces"))?;
        }
    }
    let jobs: Vec<(Cell, u64)> =
        config.cells().into_iter().flat_map(|c| config.seed_list().into_iter().map(move |s| (c, s))).collect();
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run = |&(cell, seed): &(Cell, u64)| -> RunOutcome {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(|| run_cell(config, &cell, seed)));
        let result = match res {
            Ok(Ok((m, trace))) => {
                if write && config.save_traces {
                    let p = out_dir.join("traces").join(format!("cell{}_seed{}.csv", cell.index, seed));
                    if let Err(e) = trace.save_csv(&p) {
                        eprintln!("warning: could not write {}: {e}", p.display());
                    }
                }
                Ok(m)
            }
            Ok(Err(e)) => Err(e.to_string()),
            Err(p) => Err(panic_text(&p)),
        };
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        if !quiet {
            let status = match &result {
                Ok(m) => format!("|m| = {:.3}, risk {:.4} -> {:.4}", m.m_abs, m.risk_pre, m.risk_post),
                Err(e) => format!("failed: {e}"),
            };
            eprintln!(
                "[{k}/{total}] cell {} (d={}, s={}, n={}) seed {seed}: {status}",
                cell.index, cell.d, cell.s, cell.n
            );
        }
        RunOutcome { cell, seed, result, wall_seconds: start.elapsed().as_secs_f64() }
    };
    let mut outcomes: Vec<RunOutcome> = match worker_count() {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(run).collect())
        }
        None => jobs.par_iter().map(run).collect(),
    };
    outcomes.sort_by_key(|o| (o.cell.index, o.seed));

    let results = results_table(config, &outcomes);
    let mut timings = Table::new(&TIMING_COLUMNS);
    for o in &outcomes {
        timings.push(vec![o.cell.index.to_string(), o.seed.to_string(), format!("{:.3}", o.wall_seconds)]);
    }
    let results_path = if write {
        let p = out_dir.join("results.csv");
        results.save_csv(&p)?;
        timings.save_csv(&out_dir.join("timings.csv"))?;
        Some(p)
    } else {
        None
    };
    Ok(ExperimentOutput { results, timings, outcomes, results_path })
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn cell_prefix(kind: &str, c: &Cell) -> Vec<String> {
    vec![
        kind.into(),
        c.index.to_string(),
        c.d.to_string(),
        c.s.to_string(),
        c.n.to_string(),
        c.n_features.to_string(),
        f(c.lambda),
        f(c.lambda_ft),
        f(c.step_theta),
    ]
}

/// Raw rows, one aggregate row per cell and, for hyperparameter grids,
/// `select_train` / `select_test` rows per `(d, s, n, N)`.
pub fn results_table(config: &ExperimentConfig, outcomes: &[RunOutcome]) -> Table {
    let mut t = Table::new(&RESULT_COLUMNS);
    for o in outcomes {
        let mut row = cell_prefix("run", &o.cell);
        row.push(o.seed.to_string());
        match &o.result {
            Ok(m) => {
                row.push("ok".into());
                for v in [m.m_abs, m.risk_pre, m.risk_post, m.train_loss] {
                    row.push(f(v));
                    row.push(String::new());
                }
                let success = m.m_abs >= config.success_threshold;
                row.push(if success { "1" } else { "0" }.into());
                row.push("1".into());
            }
            Err(e) => {
                row.push(format!("failed: {}", e.replace(['\n', '\r'], " ")));
                row.extend(std::iter::repeat_n(String::new(), 10));
            }
        }
        t.push(row);
    }

    let mut by_cell: BTreeMap<usize, Vec<&RunOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_cell.entry(o.cell.index).or_default().push(o);
    }
    let mut aggregates: Vec<(Cell, Vec<String>)> = Vec::new();
    for runs in by_cell.values() {
        let cell = runs[0].cell;
        let ok: Vec<(u64, &RunMetrics)> =
            runs.iter().filter_map(|o| o.result.as_ref().ok().map(|m| (o.seed, m))).collect();
        let success = ok.iter().filter(|(_, m)| m.m_abs >= config.success_threshold).count() as f64 / runs.len() as f64;
        let kind = match config.report {
            ReportMode::MeanStd => "mean_std",
            ReportMode::BestOf => "best_of",
        };
        let mut row = cell_prefix(kind, &cell);
        if ok.is_empty() {
            row.push(String::new());
            row.push("failed".into());
            row.extend(std::iter::repeat_n(String::new(), 8));
        } else {
            match config.report {
                ReportMode::MeanStd => {
                    row.push(String::new());
                    row.push("ok".into());
                    let cols: [fn(&RunMetrics) -> f64; 4] =
                        [|m| m.m_abs, |m| m.risk_pre, |m| m.risk_post, |m| m.train_loss];
                    for g in cols {
                        let xs: Vec<f64> = ok.iter().map(|(_, m)| g(m)).collect();
                        let (mean, std) = stats::mean_std(&xs);
                        row.push(f(mean));
                        row.push(f(std));
                    }
                }
                ReportMode::BestOf => {
                    let (seed, best) = ok
                        .iter()
                        .copied()
                        .min_by(|a, b| a.1.risk_post.total_cmp(&b.1.risk_post).then(a.0.cmp(&b.0)))
                        .unwrap();
                    row.push(seed.to_string());
                    row.push("ok".into());
                    for v in [best.m_abs, best.risk_pre, best.risk_post, best.train_loss] {
                        row.push(f(v));
                        row.push(String::new());
                    }
                }
            }
        }
        row.push(f(success));
        row.push(ok.len().to_string());
        aggregates.push((cell, row));
    }
    for (_, row) in &aggregates {
        t.push(row.clone());
    }

    if config.has_hyper_grid() {
        let col = |name: &str| RESULT_COLUMNS.iter().position(|c| *c == name).unwrap();
        let (ci_train, ci_risk, ci_kind) = (col("train_loss"), col("risk_post"), col("kind"));
        let mut groups: BTreeMap<(usize, usize, usize, usize), Vec<&Vec<String>>> = BTreeMap::new();
        for (c, row) in &aggregates {
            groups.entry((c.d, c.s, c.n, c.n_features)).or_default().push(row);
        }
        for rows in groups.values() {
            for (kind, ci) in [("select_train", ci_train), ("select_test", ci_risk)] {
                let best = rows
                    .iter()
                    .filter_map(|r| r[ci].parse::<f64>().ok().map(|v| (v, *r)))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((_, r)) = best {
                    let mut r = r.clone();
                    r[ci_kind] = kind.into();
                    t.push(r);
                }
            }
        }
    }
    t
}

/// Load a `results.csv` written by [`run_experiment`].
pub fn read_results(path: &Path) -> Result<Table> {
    let t = Table::read_csv(path)?;
    t.require(&["kind", "d", "s", "n"])?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Grid;

    pub(crate) fn tiny(seeds: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_study();
        cfg.grid = Grid {
            d: vec![4],
            s: vec![1],
            n: vec![256],
            n_features: vec![20],
            lambda: vec![0.01],
            lambda_ft: vec![1e-3],
            step_theta: vec![1.0],
        };
        cfg.seeds = seeds;
        cfg.n_test = 500;
        cfg.train.t0_steps = 20;
        cfg.train.t1_steps = 80;
        cfg.train.record_every = 50;
        cfg
    }

    #[test]
    fn one_cell_one_seed_gives_two_rows() {
        let out = run_experiment(&tiny(1), false, true).unwrap();
        assert_eq!(out.results.len(), 2);
        assert_eq!(out.results.get(0, "kind"), Some("run"));
        assert_eq!(out.results.get(1, "kind"), Some("mean_std"));
        assert_eq!(out.results.get(0, "status"), Some("ok"));
        assert_eq!(out.timings.len(), 1);
    }

    #[test]
    fn best_of_carries_min_risk_seed() {
        let mut cfg = tiny(3);
        cfg.report = ReportMode::BestOf;
        let out = run_experiment(&cfg, false, true).unwrap();
        let runs = out.results.filter("kind", "run");
        let (mut best_seed, mut best) = (String::new(), f64::INFINITY);
        for i in 0..runs.len() {
            let r = runs.get_f64(i, "risk_post").unwrap();
            if r < best {
                best = r;
                best_seed = runs.get(i, "seed").unwrap().to_string();
            }
        }
        let agg = out.results.filter("kind", "best_of");
        assert_eq!(agg.get(0, "seed"), Some(best_seed.as_str()));
        assert_eq!(agg.get_f64(0, "risk_post"), Some(best));
    }

    #[test]
    fn divergent_cell_is_isolated() {
        let mut cfg = tiny(1);
        cfg.grid.step_theta = vec![1.0, 1e9];
        cfg.train.backoff = false;
        let out = run_experiment(&cfg, false, true).unwrap();
        assert_eq!(out.failures(), 1);
        let runs = out.results.filter("kind", "run");
        assert!(runs.get(1, "status").unwrap().starts_with("failed"));
        assert_eq!(out.results.filter("kind", "select_test").len(), 1);
        assert_eq!(out.results.filter("kind", "select_test").get(0, "step_theta"), Some("1"));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(2);
        cfg.grid.s = vec![1, 2];
        cfg.output_dir = dir.path().join("a");
        run_experiment(&cfg, true, true).unwrap();
        let a = std::fs::read(dir.path().join("a/results.csv")).unwrap();
        cfg.output_dir = dir.path().join("b");
        run_experiment(&cfg, true, true).unwrap();
        let b = std::fs::read(dir.path().join("b/results.csv")).unwrap();
        assert_eq!(a, b);
        let t = read_results(&dir.path().join("a/results.csv")).unwrap();
        assert_eq!(t.columns, RESULT_COLUMNS);
        assert_eq!(t.len(), 2 * 2 + 2);
    }
}
