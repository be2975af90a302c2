//! Config-driven experiments, CSV tables, SVG plots, acceptance checks and
//! the command-line front end.

pub mod check;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod table;

pub use config::{Cell, ExperimentConfig, Grid, ReportMode, TrainTemplate};
pub use experiment::{run_experiment, ExperimentOutput, RESULT_COLUMNS};
pub use table::Table;
pub use plot::{emit_plot, render_svg, PlotKind};
