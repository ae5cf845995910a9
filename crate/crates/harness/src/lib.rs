//! Experiment harness for space-varying diffusion LMS: configuration,
//! trial-parallel Monte Carlo, theory reports and CSV/SVG/JSON output.

pub mod compare;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod metrics;
pub mod poisson;
pub mod predict;
pub mod presets;
pub mod run;
pub mod runner;
pub mod setup;
pub mod svg;

pub use error::{HarnessError, Result};
