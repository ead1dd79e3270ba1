//! Scalar nonlinear filters on the Gaussian family `θ = (mean, sd)`.

pub mod classical;
pub mod ks;
pub mod model;
pub mod projection_filter;

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::{GaussianFamily, MetricMode};
use crate::projection::ProjectionKind;

pub use classical::{AdfFilter, EkfFilter, KalmanFilter, MomentIncrements};
pub use ks::{forward_operator, ks_coefficients, ks_coefficients_grid, KsCoefficients, KsGridCoefficients};
pub use model::{FilterModel, ScalarFn};
pub use projection_filter::ProjectionFilter;

/// Chart point and time.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub theta: DVector<f64>,
    pub time: f64,
}

pub trait Filter: Send + Sync {
    fn kind(&self) -> FilterKind;

    fn name(&self) -> String {
        self.kind().to_string()
    }

    /// Itô coefficients of `dθ = A(θ) dt + B(θ) dY`.
    fn coefficients(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)>;

    /// One unguarded step.
    fn raw_step(&self, theta: &DVector<f64>, dt: f64, dy: f64) -> Result<DVector<f64>> {
        let (a, b) = self.coefficients(theta)?;
        Ok(theta + a * dt + b * dy)
    }

    /// One step; if the standard deviation leaves `(0, ∞)` the step is
    /// retried once as two half steps, each taking half the increment.
    fn step(&self, theta: &DVector<f64>, dt: f64, dy: f64) -> Result<DVector<f64>> {
        let admissible = |t: &DVector<f64>| t[1] > 0.0 && t.iter().all(|v| v.is_finite());
        match self.raw_step(theta, dt, dy) {
            Ok(next) if admissible(&next) => return Ok(next),
            Ok(_) | Err(Error::Boundary { .. }) => {}
            Err(e) => return Err(e),
        }
        let half = self.raw_step(theta, 0.5 * dt, 0.5 * dy).and_then(|mid| {
            if admissible(&mid) {
                self.raw_step(&mid, 0.5 * dt, 0.5 * dy)
            } else {
                Err(Error::Boundary { theta: mid.iter().copied().collect() })
            }
        });
        match half {
            Ok(next) if admissible(&next) => Ok(next),
            Ok(next) => Err(Error::Boundary { theta: next.iter().copied().collect() }),
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Projection { projection: ProjectionKind, mode: MetricMode },
    Kalman,
    Ekf,
    Adf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 9] = [
        Self::Projection { projection: ProjectionKind::Stratonovich, mode: MetricMode::Direct },
        Self::Projection { projection: ProjectionKind::Stratonovich, mode: MetricMode::Hellinger },
        Self::Projection { projection: ProjectionKind::ItoVector, mode: MetricMode::Direct },
        Self::Projection { projection: ProjectionKind::ItoVector, mode: MetricMode::Hellinger },
        Self::Projection { projection: ProjectionKind::ItoJet, mode: MetricMode::Direct },
        Self::Projection { projection: ProjectionKind::ItoJet, mode: MetricMode::Hellinger },
        Self::Kalman,
        Self::Ekf,
        Self::Adf,
    ];

    pub fn projection(projection: ProjectionKind, mode: MetricMode) -> Self {
        Self::Projection { projection, mode }
    }

    pub fn is_projection(self) -> bool {
        matches!(self, Self::Projection { .. })
    }

    pub fn build(self, model: &model::FilterModel) -> Box<dyn Filter> {
        self.build_with(model, &GaussianFamily::new())
    }

    /// As [`Self::build`], integrating against `family`'s quadrature.
    pub fn build_with(self, model: &model::FilterModel, family: &GaussianFamily) -> Box<dyn Filter> {
        match self {
            Self::Projection { projection, mode } => Box::new(ProjectionFilter::with_family(
                model.clone(),
                std::sync::Arc::new(family.clone()),
                projection,
                mode,
            )),
            Self::Kalman => Box::new(KalmanFilter::new(model.clone())),
            Self::Ekf => Box::new(EkfFilter::new(model.clone())),
            Self::Adf => Box::new(AdfFilter::with_family(model.clone(), family.clone())),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Projection { projection, mode } => {
                let p = match projection {
                    ProjectionKind::Stratonovich => "strat",
                    ProjectionKind::ItoVector => "vec",
                    ProjectionKind::ItoJet => "jet",
                };
                write!(f, "{p}_{}", mode.short_name())
            }
            Self::Kalman => f.write_str("kalman"),
            Self::Ekf => f.write_str("ekf"),
            Self::Adf => f.write_str("adf"),
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown filter `{s}`")))
    }
}

/// States at `t_0, t_0 + dt, …` until the end of the observations or the first failure.
#[derive(Debug)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub failure: Option<Error>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs `filter` over observation increments `dys`.
pub fn run_filter(filter: &dyn Filter, theta0: &DVector<f64>, dt: f64, dys: &[f64]) -> Trajectory {
    let mut states = Vec::with_capacity(dys.len() + 1);
    states.push(theta0.clone());
    for dy in dys {
        match filter.step(states.last().expect("non-empty"), dt, *dy) {
            Ok(next) => states.push(next),
            Err(e) => return Trajectory { states, failure: Some(e) },
        }
    }
    Trajectory { states, failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let names: Vec<String> = FilterKind::ALL.iter().map(|k| k.to_string()).collect();
        assert_eq!(names, ["strat_l2", "strat_hell", "vec_l2", "vec_hell", "jet_l2", "jet_hell", "kalman", "ekf", "adf"]);
        for k in FilterKind::ALL {
            assert_eq!(k.to_string().parse::<FilterKind>().unwrap(), k);
        }
        assert!("particle".parse::<FilterKind>().is_err());
    }

    #[test]
    fn half_step_retry_rescues_marginal_steps() {
        // Variance drift −P²: a full step of dt = 1 from P = 1.5 overshoots, two halves do not.
        let k = KalmanFilter::new(model::FilterModel::linear(0.0, 0.0, 1.0));
        let t = DVector::from_vec(vec![0.0, 1.5f64.sqrt()]);
        assert!(k.raw_step(&t, 1.0, 0.0).is_err());
        let next = k.step(&t, 1.0, 0.0).unwrap();
        let p_half = 1.5 - 0.5 * 1.5 * 1.5;
        let expected = p_half - 0.5 * p_half * p_half;
        assert!((next[1] * next[1] - expected).abs() < 1e-14);
    }

    #[test]
    fn trajectory_stops_at_failure() {
        let k = KalmanFilter::new(model::FilterModel::linear(0.0, 0.0, 10.0));
        let tr = run_filter(&k, &DVector::from_vec(vec![0.0, 1.0]), 0.5, &[0.0, 0.0, 0.0]);
        assert_eq!(tr.states.len(), 1);
        assert!(matches!(tr.failure, Some(Error::Boundary { .. })));
    }
}
