//! Gauss-Hermite rules normalized to the standard normal weight.

use std::num::NonZeroUsize;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 40;

/// Nodes `z_q` and weights `w_q` with `Σ w_q f(z_q) ≈ E f(Z)`, `Z ~ N(0,1)`.
///
/// Exact for polynomials of degree `2·order − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        let n = NonZeroUsize::new(order).ok_or_else(|| Error::Config("quadrature order must be positive".into()))?;
        let rule = gauss_quad::GaussHermite::new(n);
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(Z)` for `Z ~ N(0,1)`.
    pub fn standard_normal<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// `E f(X)` for `X ~ N(mean, sd²)`.
    pub fn normal<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut f: F) -> f64 {
        self.standard_normal(|z| f(mean + sd * z))
    }

    /// Rule for `N(mean, sd²)`: `(x_q, w_q)` pairs.
    pub fn normal_rule(&self, mean: f64, sd: f64) -> Vec<(f64, f64)> {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| (mean + sd * z, w)).collect()
    }
}

impl Default for GaussHermite {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("positive order")
    }
}
