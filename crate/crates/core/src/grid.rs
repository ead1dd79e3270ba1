//! Uniform spatial grids on `[−L, L]`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    half_width: f64,
}

impl Grid {
    /// `n` points including both endpoints, spacing `2L/(n − 1)`.
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!("grid needs at least 3 points, got {n}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Config(format!("grid half-width must be positive, got {half_width}")));
        }
        let dx = 2.0 * half_width / (n - 1) as f64;
        let points = (0..n).map(|i| -half_width + i as f64 * dx).collect();
        Ok(Self { points, half_width })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.len() - 1) as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn map<F: FnMut(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.points.iter().copied().map(f).collect()
    }

    /// Trapezoid rule.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let n = values.len();
        self.dx() * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let prod: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        self.integrate(&prod)
    }

    /// `‖f − g‖` in trapezoid L².
    pub fn distance(&self, f: &[f64], g: &[f64]) -> f64 {
        let sq: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).collect();
        self.integrate(&sq).sqrt()
    }

    /// Trapezoid weights `w_k` with `Σ w_k f_k` the integral.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        let dx = self.dx();
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * dx } else { dx }).collect()
    }
}
