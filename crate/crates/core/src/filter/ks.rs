//! Coefficients of the Kushner-Stratonovich equation `dw = μ(w) dt + Σ(w) dY`
//! for `w = p` (direct) or `w = √p` (Hellinger), as ratios against `w`.

use nalgebra::DVector;

use super::model::FilterModel;
use crate::error::{Error, Result};
use crate::family::{DensityFamily, MetricMode};
use crate::grid::Grid;

const FD_STEP: f64 = 1e-4;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// `L*p(x) = −(f p)'(x) + ½ (σ² p)''(x)` by central differences.
pub fn forward_operator(model: &FilterModel, p: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP * (1.0 + x.abs());
    let fp = |y: f64| model.drift.value(y) * p(y);
    let sp = |y: f64| model.diffusion_squared(y).0 * p(y);
    -(fp(x + h) - fp(x - h)) / (2.0 * h) + 0.5 * (sp(x + h) - 2.0 * sp(x) + sp(x - h)) / (h * h)
}

/// `L*p / p` from `l = ln p`:
/// `−(f' + f l') + ½ (s'' + 2 s' l' + s (l'² + l''))`, `s = σ²`.
pub fn forward_operator_ratio(model: &FilterModel, lx: f64, lxx: f64, x: f64) -> f64 {
    let (f, df) = (model.drift.value(x), model.drift.derivative(x));
    let (s, ds, d2s) = model.diffusion_squared(x);
    -(df + f * lx) + 0.5 * (d2s + 2.0 * ds * lx + s * (lx * lx + lxx))
}

/// `μ`, `Σ` and the Stratonovich drift `μ̄` at a family member, as ratios against `w_θ`.
#[derive(Clone)]
pub struct KsCoefficients<'a> {
    model: &'a FilterModel,
    family: &'a dyn DensityFamily,
    pub theta: DVector<f64>,
    pub mode: MetricMode,
    /// `E_p b`
    pub mean_b: f64,
    /// `E_p b²`
    pub mean_b_sq: f64,
}

pub fn ks_coefficients<'a>(
    model: &'a FilterModel,
    family: &'a dyn DensityFamily,
    theta: &DVector<f64>,
    mode: MetricMode,
) -> Result<KsCoefficients<'a>> {
    let mass = family.expectation(theta, &|_| 1.0)?;
    if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::RenormalizationRequired { drift: mass - 1.0 });
    }
    let b = |x| model.observation.value(x);
    let mean_b = family.expectation(theta, &b)?;
    let mean_b_sq = family.expectation(theta, &|x| b(x) * b(x))?;
    Ok(KsCoefficients { model, family, theta: theta.clone(), mode, mean_b, mean_b_sq })
}

impl KsCoefficients<'_> {
    pub fn forward_ratio(&self, x: f64) -> f64 {
        let (lx, lxx) = self.family.log_density_x_derivatives(&self.theta, x);
        forward_operator_ratio(self.model, lx, lxx, x)
    }

    /// `μ(w)/w` (Itô).
    pub fn drift_ratio(&self, x: f64) -> f64 {
        let (b, eb) = (self.model.observation.value(x), self.mean_b);
        match self.mode {
            MetricMode::Direct => self.forward_ratio(x) - (b - eb) * eb,
            MetricMode::Hellinger => 0.5 * self.forward_ratio(x) - 0.125 * (b - eb) * (b + 3.0 * eb),
        }
    }

    /// `μ̄(w)/w` (Stratonovich).
    pub fn stratonovich_drift_ratio(&self, x: f64) -> f64 {
        let b = self.model.observation.value(x);
        match self.mode {
            MetricMode::Direct => self.forward_ratio(x) - 0.5 * (b * b - self.mean_b_sq),
            MetricMode::Hellinger => 0.5 * self.forward_ratio(x) - 0.25 * (b * b - self.mean_b_sq),
        }
    }

    /// `Σ(w)/w`.
    pub fn diffusion_ratio(&self, x: f64) -> f64 {
        let centred = self.model.observation.value(x) - self.mean_b;
        match self.mode {
            MetricMode::Direct => centred,
            MetricMode::Hellinger => 0.5 * centred,
        }
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.family.weight(&self.theta, x, self.mode) * self.drift_ratio(x)
    }

    pub fn stratonovich_drift(&self, x: f64) -> f64 {
        self.family.weight(&self.theta, x, self.mode) * self.stratonovich_drift_ratio(x)
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        self.family.weight(&self.theta, x, self.mode) * self.diffusion_ratio(x)
    }
}

/// `μ`, `Σ` for a density known only on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KsGridCoefficients {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
}

/// Grid analogue of [`ks_coefficients`]; `values` holds `p` (direct) or `√p` (Hellinger).
pub fn ks_coefficients_grid(model: &FilterModel, grid: &Grid, values: &[f64], mode: MetricMode) -> Result<KsGridCoefficients> {
    if values.len() != grid.len() {
        return Err(Error::Shape { expected: format!("{} grid values", grid.len()), got: format!("{}", values.len()) });
    }
    let p: Vec<f64> = match mode {
        MetricMode::Direct => values.to_vec(),
        MetricMode::Hellinger => values.iter().map(|q| q * q).collect(),
    };
    let mass = grid.integrate(&p);
    if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::RenormalizationRequired { drift: mass - 1.0 });
    }
    let xs = grid.points();
    let b: Vec<f64> = grid.map(|x| model.observation.value(x));
    let eb = grid.inner(&p, &b);
    let n = grid.len();
    let dx = grid.dx();
    let fp: Vec<f64> = xs.iter().zip(&p).map(|(&x, pi)| model.drift.value(x) * pi).collect();
    let sp: Vec<f64> = xs.iter().zip(&p).map(|(&x, pi)| model.diffusion_squared(x).0 * pi).collect();
    // Zero outside the grid.
    let at = |v: &[f64], i: isize| if i < 0 || i >= n as isize { 0.0 } else { v[i as usize] };
    let lstar: Vec<f64> = (0..n as isize)
        .map(|i| -(at(&fp, i + 1) - at(&fp, i - 1)) / (2.0 * dx) + 0.5 * (at(&sp, i + 1) - 2.0 * at(&sp, i) + at(&sp, i - 1)) / (dx * dx))
        .collect();
    let (drift, diffusion) = match mode {
        MetricMode::Direct => (
            (0..n).map(|i| lstar[i] - p[i] * (b[i] - eb) * eb).collect(),
            (0..n).map(|i| p[i] * (b[i] - eb)).collect(),
        ),
        MetricMode::Hellinger => (
            (0..n)
                .map(|i| {
                    let q = values[i];
                    let ratio = if q > 0.0 { lstar[i] / (2.0 * q) } else { 0.0 };
                    ratio - 0.125 * q * (b[i] - eb) * (b[i] + 3.0 * eb)
                })
                .collect(),
            (0..n).map(|i| 0.5 * values[i] * (b[i] - eb)).collect(),
        ),
    };
    Ok(KsGridCoefficients { drift, diffusion })
}
