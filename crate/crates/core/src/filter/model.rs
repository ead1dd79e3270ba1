use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sde::ItoSde;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const FD_STEP: f64 = 1e-4;

/// Scalar function of the state with optional closed-form derivatives.
#[derive(Clone)]
pub struct ScalarFn {
    f: RealFn,
    df: Option<RealFn>,
    d2f: Option<RealFn>,
    polynomial: Option<Vec<f64>>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.polynomial {
            Some(c) => write!(f, "ScalarFn(polynomial {c:?})"),
            None => write!(f, "ScalarFn(closure, analytic derivatives: {})", self.df.is_some()),
        }
    }
}

impl ScalarFn {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self { f: Arc::new(f), df: None, d2f: None, polynomial: None }
    }

    pub fn with_derivatives<D, D2>(mut self, df: D, d2f: D2) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.df = Some(Arc::new(df));
        self.d2f = Some(Arc::new(d2f));
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(&[c])
    }

    /// `c₀ + c₁x + c₂x² + …`
    pub fn polynomial(coefficients: &[f64]) -> Self {
        let c: Vec<f64> = coefficients.to_vec();
        let d: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
        let d2: Vec<f64> = d.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
        let horner = |c: Vec<f64>| move |x: f64| c.iter().rev().fold(0.0, |acc, a| acc * x + a);
        Self {
            f: Arc::new(horner(c.clone())),
            df: Some(Arc::new(horner(d))),
            d2f: Some(Arc::new(horner(d2))),
            polynomial: Some(c),
        }
    }

    pub fn polynomial_coefficients(&self) -> Option<&[f64]> {
        self.polynomial.as_deref()
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.df {
            Some(df) => df(x),
            None => {
                let h = FD_STEP * (1.0 + x.abs());
                (self.value(x + h) - self.value(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.d2f {
            Some(d2f) => d2f(x),
            None => {
                let h = FD_STEP * (1.0 + x.abs());
                (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
            }
        }
    }
}

/// Scalar signal `dX = f(X) dt + σ(X) dW` observed through `dY = b(X) dt + dV`.
///
/// Coefficients are time-homogeneous; observation noise has unit variance.
#[derive(Clone, Debug)]
pub struct FilterModel {
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub observation: ScalarFn,
}

impl FilterModel {
    pub fn new(drift: ScalarFn, diffusion: ScalarFn, observation: ScalarFn) -> Self {
        Self { drift, diffusion, observation }
    }

    /// `f = 0`, `σ = 1`, `b(x) = x + εx³`.
    pub fn cubic_sensor(epsilon: f64) -> Self {
        Self::new(ScalarFn::constant(0.0), ScalarFn::constant(1.0), ScalarFn::polynomial(&[0.0, 1.0, 0.0, epsilon]))
    }

    /// `f(x) = a x`, constant `σ`, `b(x) = β x`.
    pub fn linear(a: f64, sigma: f64, beta: f64) -> Self {
        Self::new(ScalarFn::polynomial(&[0.0, a]), ScalarFn::constant(sigma), ScalarFn::polynomial(&[0.0, beta]))
    }

    /// `(s, s', s'')` for `s = σ²`.
    pub fn diffusion_squared(&self, x: f64) -> (f64, f64, f64) {
        let (s, ds, d2s) = (self.diffusion.value(x), self.diffusion.derivative(x), self.diffusion.second_derivative(x));
        (s * s, 2.0 * s * ds, 2.0 * (ds * ds + s * d2s))
    }

    /// Finite coefficients and `σ > 0` at every point of `xs`.
    pub fn check_on(&self, xs: &[f64]) -> Result<()> {
        for &x in xs {
            let (f, s, b) = (self.drift.value(x), self.diffusion.value(x), self.observation.value(x));
            if !(f.is_finite() && b.is_finite() && s.is_finite() && s > 0.0) {
                return Err(Error::Evaluation { state: vec![x], what: format!("model coefficients f={f}, σ={s}, b={b}") });
            }
        }
        Ok(())
    }

    /// Joint SDE of `(X, Y)` driven by `(W, V)`.
    pub fn signal_observation_sde(&self) -> ItoSde {
        let (m1, m2) = (self.clone(), self.clone());
        ItoSde::new(
            2,
            2,
            move |z, _| DVector::from_vec(vec![m1.drift.value(z[0]), m1.observation.value(z[0])]),
            move |z, _| DMatrix::from_row_slice(2, 2, &[m2.diffusion.value(z[0]), 0.0, 0.0, 1.0]),
        )
    }
}
