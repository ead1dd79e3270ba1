//! Chart-coordinate SDEs obtained by projecting an ambient Itô SDE onto an
//! embedded submanifold.
//!
//! All three projections share the diffusion `B_α = π̃_* b_α`; they differ
//! only in the drift:
//!
//! * Stratonovich: `Â = π̃_* ā` in Stratonovich form, converted to Itô form
//!   with θ-finite-differences of `B`.
//! * Itô-vector: `A = π̃_* (a − ½ Σ_{αβ} g^{αβ} ∂²φ[B_α, B_β])`.
//! * Itô-jet: `A = π̃_* a + ½ Σ_{αβ} g^{αβ} D²π̃[b_α, b_β]`, the Itô drift of
//!   the chart value of the metric projection. In closed form
//!   `½ D²π̃[u,u] = h^{-1} K(N u) π̃_* u − ½ π̃_* ∂²φ[π̃_* u, π̃_* u]`,
//!   with `N = I − Π` the normal projector and `K(w)_{ik} = Σ_γ ∂_i∂_kφ^γ w^γ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{contract_hessians, Embedding, MetricTensor, NoiseMetric};
use crate::sde::{Coefficients, ItoSde, MatrixField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProjectionKind {
    Stratonovich,
    ItoVector,
    ItoJet,
}

impl ProjectionKind {
    pub const ALL: [ProjectionKind; 3] = [Self::Stratonovich, Self::ItoVector, Self::ItoJet];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stratonovich => "stratonovich",
            Self::ItoVector => "ito_vector",
            Self::ItoJet => "ito_jet",
        }
    }
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProjectionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stratonovich" | "strat" => Ok(Self::Stratonovich),
            "ito_vector" | "vector" | "vec" => Ok(Self::ItoVector),
            "ito_jet" | "jet" => Ok(Self::ItoJet),
            other => Err(Error::Config(format!("unknown projection kind `{other}`"))),
        }
    }
}

/// θ-step for differentiating `B` in the Stratonovich → Itô conversion.
const CHART_FD_STEP: f64 = 1e-5;
/// Ambient step (relative to the direction norm) for the finite-difference Itô-jet path.
const JET_FD_STEP: f64 = 1e-3;

/// Projects ambient SDEs onto one embedding.
#[derive(Clone, Debug)]
pub struct Projector {
    embedding: Arc<Embedding>,
    noise_metric: Option<NoiseMetric>,
}

/// Pointwise geometry reused by every drift formula.
struct LocalFrame {
    jacobian: DMatrix<f64>,
    metric: MetricTensor,
    /// `π̃_*`, `n × r`.
    projector: DMatrix<f64>,
}

impl Projector {
    pub fn new(embedding: Embedding) -> Self {
        Self { embedding: Arc::new(embedding), noise_metric: None }
    }

    /// Non-identity `g_E^{αβ}` enters the drift formulas only; sample paths
    /// are always simulated with independent Brownian components.
    pub fn with_noise_metric(mut self, metric: NoiseMetric) -> Self {
        self.noise_metric = Some(metric);
        self
    }

    pub fn embedding(&self) -> &Arc<Embedding> {
        &self.embedding
    }

    fn whiten(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.noise_metric {
            None => Ok(b.clone()),
            Some(g) if g.dim() == b.ncols() => Ok(g.whiten(b)),
            Some(g) => Err(Error::Shape {
                expected: format!("{} noise components", g.dim()),
                got: format!("{}", b.ncols()),
            }),
        }
    }

    fn frame(&self, theta: &DVector<f64>) -> Result<LocalFrame> {
        let jacobian = self.embedding.jacobian(theta);
        let metric = MetricTensor::from_jacobian(&jacobian, theta)?;
        let projector = &metric.inverse * jacobian.transpose();
        Ok(LocalFrame { jacobian, metric, projector })
    }

    fn check_dims(&self, sde: &ItoSde) -> Result<()> {
        if sde.dim() != self.embedding.ambient_dim() {
            return Err(Error::Shape {
                expected: format!("ambient SDE of dimension {}", self.embedding.ambient_dim()),
                got: format!("{}", sde.dim()),
            });
        }
        Ok(())
    }

    /// `B_α = π̃_* b_α(φ(θ), t)`: the `n × m` diffusion shared by all projections.
    pub fn diffusion(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        self.check_dims(sde)?;
        let x = self.embedding.point(theta);
        Ok(self.frame(theta)?.projector * sde.diffusion(&x, t)?)
    }

    /// Stratonovich-form chart drift `Â = π̃_* ā`.
    pub fn stratonovich_drift(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check_dims(sde)?;
        let x = self.embedding.point(theta);
        let a = sde.drift(&x, t)?;
        let correction = match &self.noise_metric {
            None => sde.stratonovich_correction(&x, t)?,
            Some(_) => {
                let c = self.whiten(&sde.diffusion(&x, t)?)?;
                let mut out = DVector::zeros(sde.dim());
                for (j, db) in sde.diffusion_jacobian(&x, t)?.iter().enumerate() {
                    let dc = self.whiten(db)?;
                    for k in 0..c.ncols() {
                        out.axpy(0.5 * c[(j, k)], &dc.column(k), 1.0);
                    }
                }
                out
            }
        };
        Ok(self.frame(theta)?.projector * (a - correction))
    }

    /// Itô drift of the Stratonovich projection: `Â + ½ Σ (∂_θ B_α) B_β g^{αβ}`.
    pub fn stratonovich_ito_drift(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let a_hat = self.stratonovich_drift(sde, theta, t)?;
        let c = self.whiten(&self.diffusion(sde, theta, t)?)?;
        let mut out = a_hat;
        for j in 0..theta.len() {
            let h = CHART_FD_STEP * (1.0 + theta[j].abs());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let dc = (self.whiten(&self.diffusion(sde, &tp, t)?)? - self.whiten(&self.diffusion(sde, &tm, t)?)?)
                / (2.0 * h);
            for k in 0..c.ncols() {
                out.axpy(0.5 * c[(j, k)], &dc.column(k), 1.0);
            }
        }
        Ok(out)
    }

    pub fn ito_vector_drift(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check_dims(sde)?;
        let frame = self.frame(theta)?;
        let x = self.embedding.point(theta);
        let chart_b = self.whiten(&(&frame.projector * sde.diffusion(&x, t)?))?;
        let hess = self.embedding.hessians(theta);
        let mut v = sde.drift(&x, t)?;
        for k in 0..chart_b.ncols() {
            let bk = chart_b.column(k).into_owned();
            v -= contract_hessians(&hess, &bk, &bk) * 0.5;
        }
        Ok(frame.projector * v)
    }

    /// Closed-form Itô-jet drift.
    pub fn ito_jet_drift(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check_dims(sde)?;
        let frame = self.frame(theta)?;
        let x = self.embedding.point(theta);
        let b = self.whiten(&sde.diffusion(&x, t)?)?;
        let hess = self.embedding.hessians(theta);
        let r = self.embedding.ambient_dim();
        let normal = DMatrix::identity(r, r) - &frame.jacobian * &frame.projector;
        let mut out = &frame.projector * sde.drift(&x, t)?;
        for k in 0..b.ncols() {
            let u = b.column(k).into_owned();
            let tangential = &frame.projector * &u;
            let nu = &normal * &u;
            // K(N u) π̃_* u
            let n = theta.len();
            let mut k_nu = DMatrix::zeros(n, n);
            for (g, hg) in hess.iter().enumerate() {
                k_nu += hg * nu[g];
            }
            out += &frame.metric.inverse * (k_nu * &tangential);
            out -= &frame.projector * contract_hessians(&hess, &tangential, &tangential) * 0.5;
        }
        Ok(out)
    }

    /// Itô-jet drift from central differences of the metric projection
    /// around `φ(θ)`: first and second directional derivatives of `π̃`.
    ///
    /// Independent of [`Self::ito_jet_drift`]; the two must agree to about `1e-4`.
    pub fn ito_jet_drift_fd(&self, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.check_dims(sde)?;
        let x = self.embedding.point(theta);
        let chart_of = |y: &DVector<f64>| self.embedding.metric_projection(y, theta);
        let center = chart_of(&x)?;
        let a = sde.drift(&x, t)?;
        let mut out = DVector::zeros(theta.len());
        let an = a.norm();
        if an > 0.0 {
            let s = JET_FD_STEP / an;
            out += (chart_of(&(&x + &a * s))? - chart_of(&(&x - &a * s))?) / (2.0 * s);
        }
        let b = self.whiten(&sde.diffusion(&x, t)?)?;
        for k in 0..b.ncols() {
            let u = b.column(k).into_owned();
            let un = u.norm();
            if un == 0.0 {
                continue;
            }
            let s = JET_FD_STEP / un;
            let second = (chart_of(&(&x + &u * s))? - &center * 2.0 + chart_of(&(&x - &u * s))?) / (s * s);
            out += second * 0.5;
        }
        Ok(out)
    }

    /// Itô drift of the chart SDE produced by `kind`.
    pub fn chart_drift(&self, kind: ProjectionKind, sde: &ItoSde, theta: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        match kind {
            ProjectionKind::Stratonovich => self.stratonovich_ito_drift(sde, theta, t),
            ProjectionKind::ItoVector => self.ito_vector_drift(sde, theta, t),
            ProjectionKind::ItoJet => self.ito_jet_drift(sde, theta, t),
        }
    }

    pub fn project(&self, kind: ProjectionKind, sde: &ItoSde) -> Result<ProjectedSde> {
        self.check_dims(sde)?;
        let (p1, s1) = (self.clone(), sde.clone());
        let (p2, s2) = (self.clone(), sde.clone());
        let drift: VectorField = Arc::new(move |th: &DVector<f64>, t| p1.chart_drift(kind, &s1, th, t));
        let diffusion: MatrixField = Arc::new(move |th: &DVector<f64>, t| p2.diffusion(&s2, th, t));
        let chart_sde = ItoSde::from_coefficients(Coefficients::from_fallible(
            self.embedding.chart_dim(),
            sde.num_noises(),
            drift,
            diffusion,
        ));
        Ok(ProjectedSde { kind, chart_sde, embedding: self.embedding.clone() })
    }
}

/// Chart SDE `dY = A dt + B_α dW^α` (always in Itô form) approximating `X` by `φ(Y)`.
#[derive(Clone, Debug)]
pub struct ProjectedSde {
    pub kind: ProjectionKind,
    pub chart_sde: ItoSde,
    pub embedding: Arc<Embedding>,
}

pub fn project_diffusion(sde: &ItoSde, e: &Embedding, theta: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    Projector::new(e.clone()).diffusion(sde, theta, t)
}

pub fn stratonovich_projection(sde: &ItoSde, e: &Embedding) -> Result<ProjectedSde> {
    Projector::new(e.clone()).project(ProjectionKind::Stratonovich, sde)
}

pub fn ito_vector_projection(sde: &ItoSde, e: &Embedding) -> Result<ProjectedSde> {
    Projector::new(e.clone()).project(ProjectionKind::ItoVector, sde)
}

pub fn ito_jet_projection(sde: &ItoSde, e: &Embedding) -> Result<ProjectedSde> {
    Projector::new(e.clone()).project(ProjectionKind::ItoJet, sde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::examples::{affine, circle, ellipse, paraboloid};
    use crate::sde::{euler_maruyama_step, NoiseStream};
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn planar_noise() -> ItoSde {
        ItoSde::new(2, 2, |_, _| DVector::zeros(2), |_, _| DMatrix::identity(2, 2))
    }

    #[test]
    fn diffusion_examples() {
        let c = circle();
        // b tangent: b = φ_* u.
        let u = 0.7;
        let tangent = ItoSde::new(2, 1, |_, _| DVector::zeros(2), move |x, _| DMatrix::from_column_slice(2, 1, &[-x[1] * u, x[0] * u]));
        assert_abs_diff_eq!(project_diffusion(&tangent, &c, &v(&[1.1]), 0.0).unwrap()[(0, 0)], u, epsilon = 1e-14);
        // b normal.
        let normal = ItoSde::new(2, 1, |_, _| DVector::zeros(2), |x, _| DMatrix::from_column_slice(2, 1, &[x[0], x[1]]));
        assert_abs_diff_eq!(project_diffusion(&normal, &c, &v(&[1.1]), 0.0).unwrap()[(0, 0)], 0.0, epsilon = 1e-14);
        // Identity noise at θ = 0: tangent (0, 1).
        let b = project_diffusion(&planar_noise(), &c, &v(&[0.0]), 0.0).unwrap();
        assert_abs_diff_eq!(b[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[(0, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn circle_planar_noise_has_zero_drift_for_all_projections() {
        let p = Projector::new(circle());
        let sde = planar_noise();
        let th = v(&[0.0]);
        for kind in ProjectionKind::ALL {
            assert_abs_diff_eq!(p.chart_drift(kind, &sde, &th, 0.0).unwrap()[0], 0.0, epsilon = 1e-9);
        }
        // atan2 is harmonic: the FD path agrees.
        assert_abs_diff_eq!(p.ito_jet_drift_fd(&sde, &th, 0.0).unwrap()[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn ito_jet_matches_ito_lemma_on_atan2() {
        // X on the circle with radial + rotational noise: dθ from Itô's lemma on
        // atan2 at (cos θ, sin θ) is ∇θ·a + ½ Tr(bᵀ ∇²θ b).
        let sde = ItoSde::new(
            2,
            2,
            |x, _| DVector::from_vec(vec![0.3 * x[1], -0.2 * x[0] + 0.1]),
            |x, _| DMatrix::from_row_slice(2, 2, &[0.5 * x[0], 0.2, x[1], -0.4]),
        );
        let th = 0.8f64;
        let x = v(&[th.cos(), th.sin()]);
        let a = sde.drift(&x, 0.0).unwrap();
        let b = sde.diffusion(&x, 0.0).unwrap();
        let r2 = x.norm_squared();
        let grad = v(&[-x[1] / r2, x[0] / r2]);
        let hess = DMatrix::from_row_slice(
            2,
            2,
            &[2.0 * x[0] * x[1] / (r2 * r2), (x[1] * x[1] - x[0] * x[0]) / (r2 * r2), (x[1] * x[1] - x[0] * x[0]) / (r2 * r2), -2.0 * x[0] * x[1] / (r2 * r2)],
        );
        let expected = grad.dot(&a) + 0.5 * (b.transpose() * hess * &b).trace();
        let got = Projector::new(circle()).ito_jet_drift(&sde, &v(&[th]), 0.0).unwrap()[0];
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_noise_drifts_agree() {
        let sde = ItoSde::new(3, 1, |x, _| DVector::from_vec(vec![x[1], -x[0], 0.3 * x[2]]), |_, _| DMatrix::zeros(3, 1));
        let p = Projector::new(paraboloid(0.7));
        let th = v(&[0.3, -0.5]);
        let s = p.chart_drift(ProjectionKind::Stratonovich, &sde, &th, 0.0).unwrap();
        let iv = p.chart_drift(ProjectionKind::ItoVector, &sde, &th, 0.0).unwrap();
        let ij = p.chart_drift(ProjectionKind::ItoJet, &sde, &th, 0.0).unwrap();
        assert!((&s - &iv).amax() < 1e-10 && (&iv - &ij).amax() < 1e-10);
    }

    #[test]
    fn affine_embedding_ito_drifts_coincide() {
        let e = affine(v(&[0.0, 1.0, 0.0]), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, -1.0]));
        let sde = ItoSde::new(
            3,
            2,
            |x, _| DVector::from_vec(vec![x[1].sin(), x[0] * x[2], 1.0]),
            |x, _| DMatrix::from_row_slice(3, 2, &[x[0], 1.0, 0.3, x[1] * x[2], -0.2, 0.5]),
        );
        let p = Projector::new(e);
        let th = v(&[0.4, 0.9]);
        let iv = p.ito_vector_drift(&sde, &th, 0.0).unwrap();
        let ij = p.ito_jet_drift(&sde, &th, 0.0).unwrap();
        assert!((&iv - &ij).amax() < 1e-10);
        let pi_a = p.embedding().tangent_projection(&th, &sde.drift(&p.embedding().point(&th), 0.0).unwrap()).unwrap();
        assert!((iv - pi_a).amax() < 1e-10);
    }

    #[test]
    fn additive_noise_stratonovich_is_projected_drift() {
        let sde = ItoSde::new(2, 2, |x, _| DVector::from_vec(vec![x[1], 0.5]), |_, _| DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.7]));
        let c = circle();
        let p = Projector::new(c.clone());
        let th = v(&[0.6]);
        let a_hat = p.stratonovich_drift(&sde, &th, 0.0).unwrap();
        let pi_a = c.tangent_projection(&th, &sde.drift(&c.point(&th), 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(a_hat[0], pi_a[0], epsilon = 1e-14);
    }

    #[test]
    fn tangent_sde_on_affine_manifold_is_reproduced_pathwise() {
        // a, b tangent to a line in R²: φ(Y) follows X exactly under shared noise.
        let dir = v(&[0.6, 0.8]);
        let e = affine(v(&[1.0, -1.0]), DMatrix::from_column_slice(2, 1, dir.as_slice()));
        let (d1, d2) = (dir.clone(), dir.clone());
        let sde = ItoSde::new(
            2,
            1,
            move |x, _| &d1 * (0.3 - 0.5 * (x[0] - 1.0) / 0.6),
            move |x, _| DMatrix::from_column_slice(2, 1, (&d2 * (0.4 + 0.1 * x[0])).as_slice()),
        );
        for kind in ProjectionKind::ALL {
            let proj = Projector::new(e.clone()).project(kind, &sde).unwrap();
            let mut noise = NoiseStream::new(4, 0, 1);
            let mut y = v(&[0.0]);
            let mut x = e.point(&y);
            let dt = 1e-3;
            for k in 0..500 {
                let dw = noise.increment(dt);
                let t = k as f64 * dt;
                x = euler_maruyama_step(&sde, &x, t, dt, &dw).unwrap();
                y = euler_maruyama_step(&proj.chart_sde, &y, t, dt, &dw).unwrap();
            }
            // Stratonovich carries an O(h²) finite-difference conversion error.
            assert!((e.point(&y) - &x).amax() < 1e-8, "{kind}: {}", (e.point(&y) - x).amax());
        }
    }

    #[test]
    fn jet_closed_form_matches_finite_differences() {
        // Deterministic sweep; the randomized version lives in the acceptance suite.
        let sde = ItoSde::new(
            2,
            2,
            |x, _| DVector::from_vec(vec![0.4 - x[1], x[0] * x[1]]),
            |x, _| DMatrix::from_row_slice(2, 2, &[0.3 + x[0], 0.2, -0.1, 0.5 * x[1] + 0.4]),
        );
        for e in [circle(), ellipse(2.0, 0.6)] {
            let p = Projector::new(e);
            for th in [-2.5, -0.7, 0.0, 0.9, 2.2] {
                let th = v(&[th]);
                let closed = p.ito_jet_drift(&sde, &th, 0.0).unwrap();
                let fd = p.ito_jet_drift_fd(&sde, &th, 0.0).unwrap();
                assert!((&closed - &fd).amax() < 1e-4, "{closed} vs {fd}");
            }
        }
    }

    #[test]
    fn ellipse_vector_and_jet_differ_when_curved() {
        // Isotropic noise makes the normal coupling term vanish, so use anisotropic b.
        let p = Projector::new(ellipse(2.0, 0.6));
        let sde = ItoSde::new(2, 2, |_, _| DVector::zeros(2), |_, _| DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.3]));
        let th = v(&[0.7]);
        let iv = p.ito_vector_drift(&sde, &th, 0.0).unwrap();
        let ij = p.ito_jet_drift(&sde, &th, 0.0).unwrap();
        assert!((iv - ij).amax() > 1e-3);
    }

    #[test]
    fn identity_noise_metric_changes_nothing() {
        let sde = ItoSde::new(2, 2, |x, _| DVector::from_vec(vec![x[1], 0.1]), |x, _| DMatrix::from_row_slice(2, 2, &[x[0], 0.2, 0.1, x[1]]));
        let plain = Projector::new(ellipse(1.5, 0.8));
        let with_g = plain.clone().with_noise_metric(NoiseMetric::identity(2));
        let th = v(&[0.3]);
        for kind in ProjectionKind::ALL {
            let a = plain.chart_drift(kind, &sde, &th, 0.0).unwrap();
            let b = with_g.chart_drift(kind, &sde, &th, 0.0).unwrap();
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn correlated_noise_jet_agrees_with_fd() {
        let g = NoiseMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.5])).unwrap();
        let sde = ItoSde::new(2, 2, |_, _| DVector::zeros(2), |x, _| DMatrix::from_row_slice(2, 2, &[1.0, x[1], 0.2, 1.0]));
        let p = Projector::new(ellipse(1.3, 0.9)).with_noise_metric(g);
        let th = v(&[1.2]);
        let closed = p.ito_jet_drift(&sde, &th, 0.0).unwrap();
        let fd = p.ito_jet_drift_fd(&sde, &th, 0.0).unwrap();
        assert!((&closed - &fd).amax() < 1e-4, "{closed} vs {fd}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sde = ItoSde::new(3, 1, |_, _| DVector::zeros(3), |_, _| DMatrix::zeros(3, 1));
        assert!(matches!(Projector::new(circle()).diffusion(&sde, &v(&[0.0]), 0.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("jet".parse::<ProjectionKind>().unwrap(), ProjectionKind::ItoJet);
        assert_eq!("ito_vector".parse::<ProjectionKind>().unwrap(), ProjectionKind::ItoVector);
        assert!("milstein".parse::<ProjectionKind>().is_err());
    }
}
