//! Euclidean SDEs in Itô and Stratonovich form.
//!
//! Coefficients are stored as shared closures so that SDEs built by the
//! projections (which capture an embedding and an ambient SDE) have the same
//! type as hand-written ones. Coefficient closures are fallible: a projected
//! coefficient can hit a degenerate chart, and that error has to reach the
//! integrator instead of turning into a NaN.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type VectorField = Arc<dyn Fn(&DVector<f64>, f64) -> Result<DVector<f64>> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&DVector<f64>, f64) -> Result<DMatrix<f64>> + Send + Sync>;
/// Entry `j` is `∂b/∂x^j`, an `r × m` matrix.
pub type DiffusionJacobian =
    Arc<dyn Fn(&DVector<f64>, f64) -> Result<Vec<DMatrix<f64>>> + Send + Sync>;

/// Drift and diffusion of an `R^r` SDE driven by `m` Brownian motions.
///
/// The calculus (Itô or Stratonovich) is carried by the wrapping type.
#[derive(Clone)]
pub struct Coefficients {
    dim: usize,
    num_noises: usize,
    drift: VectorField,
    diffusion: MatrixField,
    diffusion_jacobian: Option<DiffusionJacobian>,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("dim", &self.dim)
            .field("num_noises", &self.num_noises)
            .field("analytic_jacobian", &self.diffusion_jacobian.is_some())
            .finish()
    }
}

impl Coefficients {
    pub fn new<A, B>(dim: usize, num_noises: usize, drift: A, diffusion: B) -> Self
    where
        A: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        B: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::from_fallible(
            dim,
            num_noises,
            Arc::new(move |x: &DVector<f64>, t| Ok(drift(x, t))),
            Arc::new(move |x: &DVector<f64>, t| Ok(diffusion(x, t))),
        )
    }

    pub fn from_fallible(
        dim: usize,
        num_noises: usize,
        drift: VectorField,
        diffusion: MatrixField,
    ) -> Self {
        assert!(dim > 0 && num_noises > 0, "SDE dimensions must be positive");
        Self { dim, num_noises, drift, diffusion, diffusion_jacobian: None }
    }

    /// Supplies `∂b/∂x^j` analytically; without it central differences are used.
    pub fn with_diffusion_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.diffusion_jacobian = Some(Arc::new(move |x: &DVector<f64>, t| Ok(jac(x, t))));
        self
    }

    pub fn with_fallible_jacobian(mut self, jac: DiffusionJacobian) -> Self {
        self.diffusion_jacobian = Some(jac);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_noises(&self) -> usize {
        self.num_noises
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.diffusion_jacobian.is_some()
    }

    pub fn drift(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let a = (self.drift)(x, t)?;
        if a.len() != self.dim {
            return Err(Error::Shape {
                expected: format!("drift of length {}", self.dim),
                got: format!("length {}", a.len()),
            });
        }
        check_finite(a.iter(), x, "drift")?;
        Ok(a)
    }

    pub fn diffusion(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let b = (self.diffusion)(x, t)?;
        if b.shape() != (self.dim, self.num_noises) {
            return Err(Error::Shape {
                expected: format!("{}x{} diffusion", self.dim, self.num_noises),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        check_finite(b.iter(), x, "diffusion")?;
        Ok(b)
    }

    /// `∂b/∂x^j` for each state component `j`.
    ///
    /// Falls back to central differences with step `1e-5 (1 + |x_j|)`.
    pub fn diffusion_jacobian(&self, x: &DVector<f64>, t: f64) -> Result<Vec<DMatrix<f64>>> {
        let jac = match &self.diffusion_jacobian {
            Some(j) => j(x, t)?,
            None => {
                let mut out = Vec::with_capacity(self.dim);
                for j in 0..self.dim {
                    let h = 1e-5 * (1.0 + x[j].abs());
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    out.push((self.diffusion(&xp, t)? - self.diffusion(&xm, t)?) / (2.0 * h));
                }
                out
            }
        };
        for d in &jac {
            check_finite(d.iter(), x, "diffusion derivative")?;
        }
        Ok(jac)
    }

    /// `½ Σ_α Σ_j (∂b^i_α/∂x^j) b^j_α`, the Itô–Stratonovich drift correction.
    pub fn stratonovich_correction(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let b = self.diffusion(x, t)?;
        let jac = self.diffusion_jacobian(x, t)?;
        let mut c = DVector::zeros(self.dim);
        for (j, dbj) in jac.iter().enumerate() {
            // Σ_α ∂_j b^i_α b^j_α
            for alpha in 0..self.num_noises {
                let bja = b[(j, alpha)];
                if bja != 0.0 {
                    c.axpy(0.5 * bja, &dbj.column(alpha), 1.0);
                }
            }
        }
        check_finite(c.iter(), x, "Stratonovich correction")?;
        Ok(c)
    }

    fn with_corrected_drift(&self, sign: f64) -> Coefficients {
        let base = self.clone();
        let drift: VectorField = Arc::new(move |x: &DVector<f64>, t| {
            let a = base.drift(x, t)?;
            let c = base.stratonovich_correction(x, t)?;
            Ok(a + c * sign)
        });
        Coefficients {
            dim: self.dim,
            num_noises: self.num_noises,
            drift,
            diffusion: self.diffusion.clone(),
            diffusion_jacobian: self.diffusion_jacobian.clone(),
        }
    }
}

fn check_finite<'a>(
    mut values: impl Iterator<Item = &'a f64>,
    x: &DVector<f64>,
    what: &str,
) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation { state: x.iter().copied().collect(), what: format!("non-finite {what}") })
    }
}

/// `dX = a(X,t) dt + b_α(X,t) dW^α`.
#[derive(Clone, Debug)]
pub struct ItoSde(Coefficients);

/// `dX = ā(X,t) dt + b_α(X,t) ∘ dW^α`.
#[derive(Clone, Debug)]
pub struct StratonovichSde(Coefficients);

impl ItoSde {
    pub fn new<A, B>(dim: usize, num_noises: usize, drift: A, diffusion: B) -> Self
    where
        A: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        B: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self(Coefficients::new(dim, num_noises, drift, diffusion))
    }

    pub fn from_coefficients(c: Coefficients) -> Self {
        Self(c)
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.0
    }

    pub fn with_diffusion_jacobian<J>(self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self(self.0.with_diffusion_jacobian(jac))
    }
}

impl StratonovichSde {
    pub fn new<A, B>(dim: usize, num_noises: usize, drift: A, diffusion: B) -> Self
    where
        A: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
        B: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self(Coefficients::new(dim, num_noises, drift, diffusion))
    }

    pub fn from_coefficients(c: Coefficients) -> Self {
        Self(c)
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.0
    }

    pub fn with_diffusion_jacobian<J>(self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self(self.0.with_diffusion_jacobian(jac))
    }
}

impl std::ops::Deref for ItoSde {
    type Target = Coefficients;
    fn deref(&self) -> &Coefficients {
        &self.0
    }
}

impl std::ops::Deref for StratonovichSde {
    type Target = Coefficients;
    fn deref(&self) -> &Coefficients {
        &self.0
    }
}

/// `ā = a − ½ Σ_α (∂b_α) b_α`; the diffusion is shared.
pub fn ito_to_stratonovich(sde: &ItoSde) -> StratonovichSde {
    StratonovichSde(sde.0.with_corrected_drift(-1.0))
}

/// `a = ā + ½ Σ_α (∂b_α) b_α`.
pub fn stratonovich_to_ito(sde: &StratonovichSde) -> ItoSde {
    ItoSde(sde.0.with_corrected_drift(1.0))
}

/// `x' = x + a(x,t) dt + Σ_α b_α(x,t) dW^α`.
pub fn euler_maruyama_step(
    sde: &ItoSde,
    x: &DVector<f64>,
    t: f64,
    dt: f64,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    assert!(dt >= 0.0, "time step must be non-negative");
    let a = sde.drift(x, t)?;
    let b = sde.diffusion(x, t)?;
    if dw.len() != sde.num_noises() {
        return Err(Error::Shape {
            expected: format!("{} noise increments", sde.num_noises()),
            got: format!("{}", dw.len()),
        });
    }
    let next = x + a * dt + b * dw;
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::Divergence { step: 0, time: t })
    }
}

/// Brownian increments with one ChaCha stream per component.
///
/// Streams are keyed by `(seed, substream · m + α)`, so any trial or run can
/// regenerate exactly the increments another consumer saw.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rngs: Vec<ChaCha8Rng>,
}

impl NoiseStream {
    pub fn new(seed: u64, substream: u64, num_noises: usize) -> Self {
        let rngs = (0..num_noises as u64)
            .map(|alpha| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(substream.wrapping_mul(num_noises as u64).wrapping_add(alpha));
                rng
            })
            .collect();
        Self { rngs }
    }

    pub fn num_noises(&self) -> usize {
        self.rngs.len()
    }

    pub fn standard_normals(&mut self) -> DVector<f64> {
        DVector::from_iterator(self.rngs.len(), self.rngs.iter_mut().map(|r| r.sample(StandardNormal)))
    }

    /// One increment vector with variance `dt` per component.
    pub fn increment(&mut self, dt: f64) -> DVector<f64> {
        self.standard_normals() * dt.sqrt()
    }
}

/// States and the increments that produced them on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub increments: Vec<DVector<f64>>,
}

impl SamplePath {
    pub fn dt(&self) -> Option<f64> {
        (self.times.len() > 1).then(|| self.times[1] - self.times[0])
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("a path always holds its initial state")
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and horizon >= 0, got dt={dt}, horizon={horizon}")));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(Error::Config(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    Ok(steps as usize)
}

/// Euler–Maruyama path from `x0`; the same seed gives a bit-identical path.
pub fn simulate_path(
    sde: &ItoSde,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<SamplePath> {
    let steps = step_count(horizon, dt)?;
    let mut noise = NoiseStream::new(seed, 0, sde.num_noises());
    let increments: Vec<_> = (0..steps).map(|_| noise.increment(dt)).collect();
    replay_path(sde, x0, dt, increments)
}

/// Re-integrates a path from stored increments.
pub fn replay_path(
    sde: &ItoSde,
    x0: &DVector<f64>,
    dt: f64,
    increments: Vec<DVector<f64>>,
) -> Result<SamplePath> {
    let mut times = Vec::with_capacity(increments.len() + 1);
    let mut states = Vec::with_capacity(increments.len() + 1);
    times.push(0.0);
    states.push(x0.clone());
    for (k, dw) in increments.iter().enumerate() {
        let t = k as f64 * dt;
        let next = euler_maruyama_step(sde, &states[k], t, dt, dw).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence { step: k, time: t },
            other => other,
        })?;
        states.push(next);
        times.push((k + 1) as f64 * dt);
    }
    Ok(SamplePath { times, states, increments })
}
