//! Kalman-Bucy, extended Kalman and Gaussian assumed-density filters.
//!
//! All three evolve `(mean, variance)`; states are exposed as `(mean, sd)`.

use nalgebra::DVector;

use super::model::FilterModel;
use super::{Filter, FilterKind};
use crate::error::{Error, Result};
use crate::family::{DensityFamily, GaussianFamily};

/// `dμ = D_μ dt + C_μ dY`, `dP = D_P dt + C_P dY`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentIncrements {
    pub mean_drift: f64,
    pub mean_gain: f64,
    pub var_drift: f64,
    pub var_gain: f64,
}

impl MomentIncrements {
    fn apply(&self, mean: f64, var: f64, dt: f64, dy: f64) -> (f64, f64) {
        (mean + self.mean_drift * dt + self.mean_gain * dy, var + self.var_drift * dt + self.var_gain * dy)
    }

    /// Itô coefficients of `(μ, s)`, `s = √P`:
    /// `ds = dP/(2s) − C_P² /(8s³) dt`.
    fn chart_coefficients(&self, sd: f64) -> (DVector<f64>, DVector<f64>) {
        let a = DVector::from_vec(vec![
            self.mean_drift,
            self.var_drift / (2.0 * sd) - self.var_gain * self.var_gain / (8.0 * sd.powi(3)),
        ]);
        let b = DVector::from_vec(vec![self.mean_gain, self.var_gain / (2.0 * sd)]);
        (a, b)
    }
}

fn moment_step(theta: &DVector<f64>, inc: MomentIncrements, dt: f64, dy: f64) -> Result<DVector<f64>> {
    let (mean, var) = inc.apply(theta[0], theta[1] * theta[1], dt, dy);
    if !(var > 0.0) || !mean.is_finite() || !var.is_finite() {
        return Err(Error::Boundary { theta: vec![mean, var.max(0.0).sqrt()] });
    }
    Ok(DVector::from_vec(vec![mean, var.sqrt()]))
}

fn check_state(theta: &DVector<f64>) -> Result<()> {
    if theta.len() != 2 {
        return Err(Error::Shape { expected: "θ = (mean, sd)".into(), got: format!("length {}", theta.len()) });
    }
    if !(theta[1] > 0.0) {
        return Err(Error::Boundary { theta: theta.iter().copied().collect() });
    }
    Ok(())
}

/// Kalman-Bucy filter for the model linearized at the origin:
/// `f(x) ≈ f(0) + f'(0) x`, `σ ≈ σ(0)`, `b(x) ≈ b(0) + b'(0) x`.
#[derive(Clone, Debug)]
pub struct KalmanFilter {
    f0: f64,
    a: f64,
    sigma_sq: f64,
    b0: f64,
    beta: f64,
}

impl KalmanFilter {
    pub fn new(model: FilterModel) -> Self {
        Self {
            f0: model.drift.value(0.0),
            a: model.drift.derivative(0.0),
            sigma_sq: model.diffusion_squared(0.0).0,
            b0: model.observation.value(0.0),
            beta: model.observation.derivative(0.0),
        }
    }

    pub fn increments(&self, mean: f64, var: f64) -> MomentIncrements {
        let gain = var * self.beta;
        MomentIncrements {
            mean_drift: self.f0 + self.a * mean - gain * (self.b0 + self.beta * mean),
            mean_gain: gain,
            var_drift: 2.0 * self.a * var + self.sigma_sq - var * var * self.beta * self.beta,
            var_gain: 0.0,
        }
    }
}

impl Filter for KalmanFilter {
    fn kind(&self) -> FilterKind {
        FilterKind::Kalman
    }

    fn coefficients(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_state(theta)?;
        Ok(self.increments(theta[0], theta[1] * theta[1]).chart_coefficients(theta[1]))
    }

    fn raw_step(&self, theta: &DVector<f64>, dt: f64, dy: f64) -> Result<DVector<f64>> {
        check_state(theta)?;
        moment_step(theta, self.increments(theta[0], theta[1] * theta[1]), dt, dy)
    }
}

/// Extended Kalman filter: linearization at the current mean.
#[derive(Clone, Debug)]
pub struct EkfFilter {
    model: FilterModel,
}

impl EkfFilter {
    pub fn new(model: FilterModel) -> Self {
        Self { model }
    }

    pub fn increments(&self, mean: f64, var: f64) -> MomentIncrements {
        let m = &self.model;
        let db = m.observation.derivative(mean);
        MomentIncrements {
            mean_drift: m.drift.value(mean) - var * db * m.observation.value(mean),
            mean_gain: var * db,
            var_drift: 2.0 * m.drift.derivative(mean) * var + m.diffusion_squared(mean).0 - var * var * db * db,
            var_gain: 0.0,
        }
    }
}

impl Filter for EkfFilter {
    fn kind(&self) -> FilterKind {
        FilterKind::Ekf
    }

    fn coefficients(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_state(theta)?;
        Ok(self.increments(theta[0], theta[1] * theta[1]).chart_coefficients(theta[1]))
    }

    fn raw_step(&self, theta: &DVector<f64>, dt: f64, dy: f64) -> Result<DVector<f64>> {
        check_state(theta)?;
        moment_step(theta, self.increments(theta[0], theta[1] * theta[1]), dt, dy)
    }
}

/// Gaussian moment matching of the Kushner-Stratonovich equation (Itô form):
///
/// `dμ = E f dt + Cov(x, b) dI`,
/// `dP = (2 Cov(x, f) + E σ² − Cov(x, b)²) dt + E[(x − μ)²(b − E b)] dI`,
///
/// with innovation `dI = dY − E b dt`.
#[derive(Clone, Debug)]
pub struct AdfFilter {
    model: FilterModel,
    family: GaussianFamily,
}

impl AdfFilter {
    pub fn new(model: FilterModel) -> Self {
        Self::with_family(model, GaussianFamily::new())
    }

    pub fn with_family(model: FilterModel, family: GaussianFamily) -> Self {
        Self { model, family }
    }

    pub fn increments(&self, theta: &DVector<f64>) -> Result<MomentIncrements> {
        let (mean, m) = (theta[0], &self.model);
        let e = |f: &dyn Fn(f64) -> f64| self.family.expectation(theta, f);
        let ef = e(&|x| m.drift.value(x))?;
        let eb = e(&|x| m.observation.value(x))?;
        let cov_xb = e(&|x| (x - mean) * m.observation.value(x))?;
        let cov_xf = e(&|x| (x - mean) * m.drift.value(x))?;
        let es = e(&|x| m.diffusion_squared(x).0)?;
        let k3 = e(&|x| (x - mean).powi(2) * (m.observation.value(x) - eb))?;
        Ok(MomentIncrements {
            mean_drift: ef - cov_xb * eb,
            mean_gain: cov_xb,
            var_drift: 2.0 * cov_xf + es - cov_xb * cov_xb - k3 * eb,
            var_gain: k3,
        })
    }
}

impl Filter for AdfFilter {
    fn kind(&self) -> FilterKind {
        FilterKind::Adf
    }

    fn coefficients(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_state(theta)?;
        Ok(self.increments(theta)?.chart_coefficients(theta[1]))
    }

    fn raw_step(&self, theta: &DVector<f64>, dt: f64, dy: f64) -> Result<DVector<f64>> {
        check_state(theta)?;
        moment_step(theta, self.increments(theta)?, dt, dy)
    }
}
