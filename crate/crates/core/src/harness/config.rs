//! Experiment configuration, read from TOML or JSON.
//!
//! ```toml
//! name = "smoke"
//! seeds = 2
//! report = "mean_std"          # or "best_of"
//! output_dir = "results/smoke"
//!
//! [grid]
//! d = [10]
//! s = [1, 3]
//! n = [1024, 4096]
//! N = [100]
//! lambda = [0.01]
//! lambda_ft = [1e-4]
//! step_theta = [1.0]
//!
//! [teacher]
//! sigma = 0.001
//! link = { kind = "piecewise_linear", knots = [-2.0, -1.0, 0.5, 2.0], slopes = [0.0, 1.0, -1.3333333333333333, 0.6666666666666666, 0.0] }
//!
//! [train]
//! t0_steps = 500
//! t1_steps = 9500
//! ```
//!
//! Each grid cell strips the teacher link to order `s`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{Link, TeacherConfig};
use crate::error::{Error, Result};
use crate::features::Activation;
use crate::train::TrainConfig;

/// How seeds are summarized per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    #[default]
    MeanStd,
    /// Keep the seed with the smallest fine-tuned excess risk.
    BestOf,
}

/// Axes of the sweep; the cells are their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: Vec<usize>,
    pub s: Vec<usize>,
    pub n: Vec<usize>,
    #[serde(rename = "N")]
    pub n_features: Vec<usize>,
    pub lambda: Vec<f64>,
    pub lambda_ft: Vec<f64>,
    pub step_theta: Vec<f64>,
}

/// Training settings shared by every cell. `lambda` and `step_theta` come
/// from the grid; `step_c = step_theta / step_ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainTemplate {
    #[serde(default = "default_ratio")]
    pub step_ratio: f64,
    #[serde(default = "default_t0")]
    pub t0_steps: usize,
    #[serde(default = "default_t1")]
    pub t1_steps: usize,
    #[serde(default)]
    pub rho_init: Option<f64>,
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default = "yes")]
    pub backoff: bool,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn default_ratio() -> f64 {
    100.0
}
fn default_t0() -> usize {
    500
}
fn default_t1() -> usize {
    9500
}
fn default_record() -> usize {
    500
}
fn yes() -> bool {
    true
}
fn default_tau() -> f64 {
    2.0
}
fn default_n_test() -> usize {
    10_000
}
fn default_seeds() -> u64 {
    10
}
fn default_name() -> String {
    "experiment".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_success() -> f64 {
    0.9
}

impl Default for TrainTemplate {
    fn default() -> Self {
        Self {
            step_ratio: default_ratio(),
            t0_steps: default_t0(),
            t1_steps: default_t1(),
            rho_init: None,
            n0: None,
            record_every: default_record(),
            backoff: true,
            warm_start: true,
        }
    }
}

impl TrainTemplate {
    pub fn config(&self, lambda: f64, step_theta: f64, s: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            rho_init: self.rho_init,
            n0: self.n0,
            init_s: s,
            seed,
            record_every: self.record_every,
            backoff: self.backoff,
            warm_start: self.warm_start,
            ..TrainConfig::with_ratio(lambda, step_theta, self.step_ratio, self.t0_steps, self.t1_steps)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: Grid,
    /// Seeds `base_seed .. base_seed + seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub train: TrainTemplate,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "relu")]
    pub activation: Activation,
    /// Fine-tuning sample size; defaults to the cell's `n`.
    #[serde(default)]
    pub n_finetune: Option<usize>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// `|m|` at or above which a seed counts as a success.
    #[serde(default = "default_success")]
    pub success_threshold: f64,
    #[serde(default)]
    pub report: ReportMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also write one trace CSV per run under `traces/`.
    #[serde(default)]
    pub save_traces: bool,
}

fn relu() -> Activation {
    Activation::Relu
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub n_features: usize,
    pub lambda: f64,
    pub lambda_ft: f64,
    pub step_theta: f64,
}

impl ExperimentConfig {
    /// The full synthetic study: `d ∈ {10, 20, 50}`, `s ∈ {1, 2, 3}`,
    /// `N = 100`, `σ = 0.001`, `n = 2^9 … 2^15`, 10 seeds.
    pub fn default_study() -> Self {
        Self {
            name: "default".into(),
            grid: Grid {
                d: vec![10, 20, 50],
                s: vec![1, 2, 3],
                n: (9..=15).map(|k| 1usize << k).collect(),
                n_features: vec![100],
                lambda: vec![0.01],
                lambda_ft: vec![1e-4],
                step_theta: vec![1.0],
            },
            seeds: 10,
            base_seed: 0,
            teacher: TeacherConfig::new(Link::default_piecewise()),
            train: TrainTemplate::default(),
            tau: 2.0,
            activation: Activation::Relu,
            n_finetune: None,
            n_test: 10_000,
            success_threshold: 0.9,
            report: ReportMode::MeanStd,
            output_dir: PathBuf::from("results/default"),
            save_traces: false,
        }
    }

    /// Parse by file extension (`.toml` or `.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            Some("toml") => toml::from_str(&text)?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "config extension {other:?} not recognized (use .toml or .json)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let lens = [g.d.len(), g.s.len(), g.n.len(), g.n_features.len(), g.lambda.len(), g.lambda_ft.len(), g.step_theta.len()];
        if lens.contains(&0) {
            return Err(Error::InvalidParameter("every grid axis needs at least one value".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("seeds must be >= 1".into()));
        }
        if g.d.iter().any(|&d| d < 2) || g.s.contains(&0) || g.n.contains(&0) || g.n_features.contains(&0) {
            return Err(Error::InvalidParameter("grid needs d >= 2, s >= 1, n >= 1, N >= 1".into()));
        }
        if g.lambda.iter().chain(&g.lambda_ft).chain(&g.step_theta).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("lambda, lambda_ft and step_theta must be > 0".into()));
        }
        if !(self.tau > 1.0) {
            return Err(Error::InvalidParameter(format!("tau = {} must exceed 1", self.tau)));
        }
        if self.n_test == 0 || self.n_finetune == Some(0) {
            return Err(Error::InvalidParameter("n_test and n_finetune must be >= 1".into()));
        }
        self.activation.validate()
    }

    /// Cells in a fixed order: `d, s, n, N, λ, λ', step` with the last axis
    /// varying fastest.
    pub fn cells(&self) -> Vec<Cell> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &d in &g.d {
            for &s in &g.s {
                for &n in &g.n {
                    for &nf in &g.n_features {
                        for &lambda in &g.lambda {
                            for &lambda_ft in &g.lambda_ft {
                                for &step_theta in &g.step_theta {
                                    out.push(Cell {
                                        index: out.len(),
                                        d,
                                        s,
                                        n,
                                        n_features: nf,
                                        lambda,
                                        lambda_ft,
                                        step_theta,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (self.base_seed..self.base_seed + self.seeds).collect()
    }

    /// Teacher for a cell: the configured link stripped to order `s`.
    pub fn teacher_for(&self, cell: &Cell) -> TeacherConfig {
        TeacherConfig { link: Link::stripped(self.teacher.link.clone(), cell.s), ..self.teacher.clone() }
    }

    /// Whether more than one hyperparameter combination exists per
    /// `(d, s, n, N)`.
    pub fn has_hyper_grid(&self) -> bool {
        self.grid.lambda.len() * self.grid.lambda_ft.len() * self.grid.step_theta.len() > 1
    }
}
