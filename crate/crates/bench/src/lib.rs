//! Shared fixtures for the benchmarks.

use nalgebra::DVector;
use projfilter_core::experiment::scenario::simulate_observations;
use projfilter_core::{FilterModel, GaussianFamily};

/// Default cubic sensor used across benches.
pub const EPSILON: f64 = 0.05;

pub fn cubic_sensor() -> FilterModel {
    FilterModel::cubic_sensor(EPSILON)
}

pub fn prior() -> DVector<f64> {
    GaussianFamily::theta(0.0, 1.0)
}

/// `steps` observation increments of the cubic sensor at `dt`.
pub fn observations(dt: f64, steps: usize, seed: u64) -> Vec<f64> {
    simulate_observations(&cubic_sensor(), (0.0, 1.0), dt, steps, seed).expect("finite path").1
}
