//! Finite-difference solution of the Kushner-Stratonovich equation on a grid,
//! used as the exact filter when scoring approximate filters.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::family::{DensityFamily, MetricMode};
use crate::filter::FilterModel;
use crate::grid::Grid;

pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
pub const COLLAPSE_MASS: f64 = 1e-8;

/// Nonnegative density values on a grid, normalized by the trapezoid rule.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Samples and normalizes `f`.
    pub fn from_fn<F: FnMut(f64) -> f64>(grid: Grid, f: F) -> Result<Self> {
        let values = grid.map(f);
        Self::from_values(grid, values)
    }

    pub fn gaussian(grid: Grid, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::Boundary { theta: vec![mean, sd] });
        }
        Self::from_fn(grid, |x| (-0.5 * ((x - mean) / sd).powi(2)).exp())
    }

    pub fn from_values(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape { expected: format!("{} grid values", grid.len()), got: format!("{}", values.len()) });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Solver("density values must be finite and nonnegative".into()));
        }
        let mass = grid.integrate(&values);
        if !(mass >= COLLAPSE_MASS) {
            return Err(Error::Solver(format!("mass {mass:e} too small to normalize")));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Largest value at the boundary nodes or their neighbours.
    pub fn boundary_value(&self) -> f64 {
        let n = self.values.len();
        self.values[1].max(self.values[n - 2]).max(self.values[0]).max(self.values[n - 1])
    }

    /// Errors when [`Self::boundary_value`] exceeds [`BOUNDARY_TOLERANCE`].
    pub fn check_boundary(&self) -> Result<()> {
        let edge = self.boundary_value();
        if edge > BOUNDARY_TOLERANCE {
            return Err(Error::DomainTooSmall { value: edge });
        }
        Ok(())
    }
}

/// Trapezoid mean and variance.
///
/// Densities narrower than the spacing report a variance near the `Δx²`
/// resolution floor rather than their true width.
pub fn grid_moments(p: &GridDensity) -> (f64, f64) {
    let g = &p.grid;
    let mass = p.mass();
    let mean = g.integrate(&g.points().iter().zip(&p.values).map(|(x, v)| x * v).collect::<Vec<_>>()) / mass;
    let var = g.integrate(&g.points().iter().zip(&p.values).map(|(x, v)| (x - mean).powi(2) * v).collect::<Vec<_>>()) / mass;
    (mean, var)
}

/// L² distance between `p` and the family member at `theta`, on `p`'s grid:
/// densities for [`MetricMode::Direct`], square roots for [`MetricMode::Hellinger`].
pub fn residual(p: &GridDensity, family: &dyn DensityFamily, theta: &DVector<f64>, mode: MetricMode) -> Result<f64> {
    family.check(theta)?;
    let g = &p.grid;
    let fam = g.map(|x| family.weight(theta, x, mode));
    let own: Vec<f64> = match mode {
        MetricMode::Direct => p.values.clone(),
        MetricMode::Hellinger => p.values.iter().map(|v| v.sqrt()).collect(),
    };
    Ok(g.distance(&own, &fam))
}

/// Residual between two grid densities on the same grid.
pub fn grid_residual(p: &GridDensity, q: &GridDensity, mode: MetricMode) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::Shape { expected: format!("grid of {} points", p.grid.len()), got: format!("{} points", q.grid.len()) });
    }
    let f = |v: &[f64]| -> Vec<f64> {
        match mode {
            MetricMode::Direct => v.to_vec(),
            MetricMode::Hellinger => v.iter().map(|x| x.sqrt()).collect(),
        }
    };
    Ok(p.grid.distance(&f(&p.values), &f(&q.values)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BayesCorrection {
    /// `p ← p · exp(b dY − ½ b² dt)`, then renormalize.
    #[default]
    Exponential,
    /// `p ← p · (1 + (b − E b)(dY − E b dt))`, floored at zero, then renormalize.
    Linearized,
}

/// Operator-split scheme: implicit Fokker-Planck substep, then observation correction.
#[derive(Clone, Debug)]
pub struct ReferenceSolver {
    grid: Grid,
    correction: BayesCorrection,
    /// Drift at the cell faces `x_{i+½}`, `i = 0..N−1`.
    face_drift: Vec<f64>,
    /// `σ²` at the nodes.
    diffusion_sq: Vec<f64>,
    observation: Vec<f64>,
}

impl ReferenceSolver {
    pub fn new(model: &FilterModel, grid: Grid) -> Result<Self> {
        model.check_on(grid.points())?;
        let dx = grid.dx();
        let face_drift = grid.points()[..grid.len() - 1].iter().map(|&x| model.drift.value(x + 0.5 * dx)).collect();
        let diffusion_sq = grid.map(|x| model.diffusion_squared(x).0);
        let observation = grid.map(|x| model.observation.value(x));
        Ok(Self { grid, correction: BayesCorrection::default(), face_drift, diffusion_sq, observation })
    }

    pub fn with_correction(mut self, correction: BayesCorrection) -> Self {
        self.correction = correction;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solves `(I − dt L*) p_new = p` with zero values at both boundary nodes.
    /// Returns the unnormalized result.
    pub fn fokker_planck(&self, p: &[f64], dt: f64) -> Vec<f64> {
        let n = self.grid.len();
        let dx = self.grid.dx();
        let (s, fd) = (&self.diffusion_sq, &self.face_drift);
        let m = n - 2;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for r in 0..m {
            let i = r + 1;
            let (plus_r, minus_r) = (fd[i].max(0.0), fd[i].min(0.0));
            let (plus_l, minus_l) = (fd[i - 1].max(0.0), fd[i - 1].min(0.0));
            diag[r] = 1.0 + dt * ((plus_r - minus_l) / dx + s[i] / (dx * dx));
            upper[r] = dt * (minus_r / dx - 0.5 * s[i + 1] / (dx * dx));
            lower[r] = -dt * (plus_l / dx + 0.5 * s[i - 1] / (dx * dx));
            rhs[r] = p[i];
        }
        let interior = thomas(&lower, &diag, &upper, rhs);
        let mut out = vec![0.0; n];
        out[1..n - 1].copy_from_slice(&interior);
        out
    }

    /// One step of `dp = L*p dt + p (b − E b)(dY − E b dt)`, rejecting
    /// results that reach the boundary.
    pub fn step(&self, p: &GridDensity, dt: f64, dy: f64) -> Result<GridDensity> {
        let next = self.step_unchecked(p, dt, dy)?;
        next.check_boundary()?;
        Ok(next)
    }

    /// As [`Self::step`] without the boundary check; callers inspect
    /// [`GridDensity::boundary_value`] themselves.
    pub fn step_unchecked(&self, p: &GridDensity, dt: f64, dy: f64) -> Result<GridDensity> {
        if p.grid != self.grid {
            return Err(Error::Shape { expected: "density on the solver grid".into(), got: "different grid".into() });
        }
        let predicted = self.fokker_planck(&p.values, dt);
        let b = &self.observation;
        let (corrected, log_scale): (Vec<f64>, f64) = match self.correction {
            BayesCorrection::Exponential => {
                let exponent: Vec<f64> = b.iter().map(|bi| bi * dy - 0.5 * bi * bi * dt).collect();
                let top = predicted
                    .iter()
                    .zip(&exponent)
                    .filter(|(v, _)| **v > 0.0)
                    .map(|(_, e)| *e)
                    .fold(f64::NEG_INFINITY, f64::max);
                let top = if top.is_finite() { top } else { 0.0 };
                let vals = predicted.iter().zip(&exponent).map(|(v, e)| v * (e - top).exp()).collect();
                // Collapse is judged on the likelihood ratio against exp(b̄ dY − ½ b̄² dt), b̄ = E b.
                let mass = self.grid.integrate(&predicted);
                let eb = self.grid.inner(&predicted, b) / mass;
                (vals, top - (eb * dy - 0.5 * eb * eb * dt))
            }
            BayesCorrection::Linearized => {
                let mass = self.grid.integrate(&predicted);
                let eb = self.grid.inner(&predicted, b) / mass;
                let vals = predicted.iter().zip(b).map(|(v, bi)| (v * (1.0 + (bi - eb) * (dy - eb * dt))).max(0.0)).collect();
                (vals, 0.0)
            }
        };
        let mass = self.grid.integrate(&corrected);
        if !(mass.is_finite() && mass > 0.0) || mass.ln() + log_scale < COLLAPSE_MASS.ln() {
            return Err(Error::Solver(format!("negative-mass collapse (mass {mass:e})")));
        }
        Ok(GridDensity { grid: self.grid.clone(), values: corrected.into_iter().map(|v| v / mass).collect() })
    }
}

/// Tridiagonal solve; `lower[0]` and `upper[n−1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], mut rhs: Vec<f64>) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs
}
