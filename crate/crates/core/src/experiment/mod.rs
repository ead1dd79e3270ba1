//! Scenario files, end-to-end filter runs, ε-sweeps, order probes and their CSV output.

pub mod config;
pub mod probes;
pub mod scenario;
pub mod sweep;

use std::path::Path;

use crate::error::{Error, Result};

pub use config::{ScenarioConfig, Seeds, OUT_DIR_ENV};
pub use probes::{planar_brownian_motion, probe_orders, ProbeSummary};
pub use scenario::{run_scenario, run_seed, FilterSeries, RunResult, ScenarioResult, Summary, SummarySeries};
pub use sweep::{epsilon_sweep, SweepRow, SweepSlope, SweepTable};

/// 17 significant digits, which round-trips every `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
