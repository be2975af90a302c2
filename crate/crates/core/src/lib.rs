pub mod datagen;
pub mod error;
pub mod features;
pub mod harness;
pub mod hermite;
pub mod landscape;
pub mod model;
pub mod stats;
pub mod train;
pub mod util;

pub use error::{Error, Result};
