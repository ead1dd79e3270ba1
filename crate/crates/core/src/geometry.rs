//! Submanifolds of `R^r` given by a parameterization `φ: R^n → R^r`.
//!
//! Index convention throughout: chart indices `i, j, k ∈ 0..n`, ambient
//! indices `γ ∈ 0..r`, noise indices `α, β ∈ 0..m`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type ChartMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ChartJacobian = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ChartHessians = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Condition number beyond which the pullback metric counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

const FD_STEP: f64 = 1e-5;
const FD_STEP_SECOND: f64 = 1e-4;

/// Parameterized embedded submanifold.
#[derive(Clone)]
pub struct Embedding {
    chart_dim: usize,
    ambient_dim: usize,
    phi: ChartMap,
    d_phi: Option<ChartJacobian>,
    d2_phi: Option<ChartHessians>,
    chart: Option<ChartMap>,
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Embedding")
            .field("chart_dim", &self.chart_dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("analytic_d_phi", &self.d_phi.is_some())
            .field("analytic_d2_phi", &self.d2_phi.is_some())
            .finish()
    }
}

impl Embedding {
    pub fn new<F>(chart_dim: usize, ambient_dim: usize, phi: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(ambient_dim > chart_dim && chart_dim > 0, "need 0 < n < r");
        Self { chart_dim, ambient_dim, phi: Arc::new(phi), d_phi: None, d2_phi: None, chart: None }
    }

    /// Analytic `φ_*` as an `r × n` matrix whose columns are `∂φ/∂θ^i`.
    pub fn with_jacobian<F>(mut self, d_phi: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.d_phi = Some(Arc::new(d_phi));
        self
    }

    /// Analytic second derivatives: entry `γ` is the `n × n` Hessian of `φ^γ`.
    pub fn with_hessians<F>(mut self, d2_phi: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.d2_phi = Some(Arc::new(d2_phi));
        self
    }

    /// Closed-form chart `ψ = φ^{-1}` on the image, when one is known.
    pub fn with_chart<F>(mut self, psi: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.chart = Some(Arc::new(psi));
        self
    }

    /// Drops analytic derivatives, forcing the finite-difference fallbacks.
    pub fn without_analytic_derivatives(&self) -> Self {
        Self { d_phi: None, d2_phi: None, ..self.clone() }
    }

    pub fn chart_dim(&self) -> usize {
        self.chart_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn point(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.phi)(theta)
    }

    pub fn chart(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.chart.as_ref().map(|psi| psi(x))
    }

    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match &self.d_phi {
            Some(d) => d(theta),
            None => {
                let mut j = DMatrix::zeros(self.ambient_dim, self.chart_dim);
                for i in 0..self.chart_dim {
                    let h = FD_STEP * (1.0 + theta[i].abs());
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[i] += h;
                    tm[i] -= h;
                    j.set_column(i, &((self.point(&tp) - self.point(&tm)) / (2.0 * h)));
                }
                j
            }
        }
    }

    /// `∂²φ^γ/∂θ^i∂θ^j`, one symmetric `n × n` matrix per ambient component.
    pub fn hessians(&self, theta: &DVector<f64>) -> Vec<DMatrix<f64>> {
        if let Some(d2) = &self.d2_phi {
            return d2(theta);
        }
        let n = self.chart_dim;
        let mut out = vec![DMatrix::zeros(n, n); self.ambient_dim];
        if self.d_phi.is_some() {
            for k in 0..n {
                let h = FD_STEP * (1.0 + theta[k].abs());
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let dj = (self.jacobian(&tp) - self.jacobian(&tm)) / (2.0 * h);
                for (g, hg) in out.iter_mut().enumerate() {
                    for i in 0..n {
                        hg[(i, k)] = dj[(g, i)];
                    }
                }
            }
        } else {
            let f0 = self.point(theta);
            for i in 0..n {
                for k in i..n {
                    let hi = FD_STEP_SECOND * (1.0 + theta[i].abs());
                    let hk = FD_STEP_SECOND * (1.0 + theta[k].abs());
                    let second = if i == k {
                        let mut tp = theta.clone();
                        let mut tm = theta.clone();
                        tp[i] += hi;
                        tm[i] -= hi;
                        (self.point(&tp) - &f0 * 2.0 + self.point(&tm)) / (hi * hi)
                    } else {
                        let shifted = |si: f64, sk: f64| {
                            let mut t = theta.clone();
                            t[i] += si * hi;
                            t[k] += sk * hk;
                            self.point(&t)
                        };
                        (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                            / (4.0 * hi * hk)
                    };
                    for (g, hg) in out.iter_mut().enumerate() {
                        hg[(i, k)] = second[g];
                        hg[(k, i)] = second[g];
                    }
                }
            }
        }
        // Symmetrize; FD of an analytic Jacobian is only symmetric to O(h²).
        for hg in &mut out {
            let sym = (&*hg + hg.transpose()) * 0.5;
            *hg = sym;
        }
        out
    }

    pub fn metric_tensor(&self, theta: &DVector<f64>) -> Result<MetricTensor> {
        MetricTensor::from_jacobian(&self.jacobian(theta), theta)
    }

    /// Components of `π̃_* = φ_*^{-1} ∘ Π`, an `n × r` matrix `h^{-1} φ_*ᵀ`.
    pub fn tangent_projector(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.jacobian(theta);
        let m = MetricTensor::from_jacobian(&j, theta)?;
        Ok(&m.inverse * j.transpose())
    }

    /// Orthogonal projector `Π = φ_* π̃_*` on `R^r`.
    pub fn ambient_projector(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.jacobian(theta);
        let m = MetricTensor::from_jacobian(&j, theta)?;
        Ok(&j * &m.inverse * j.transpose())
    }

    /// Chart vector `w` with `φ_* w` the orthogonal projection of `v` onto the tangent space.
    pub fn tangent_projection(&self, theta: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.tangent_projector(theta)? * v)
    }

    /// `Σ_{ij} ∂²φ/∂θ^i∂θ^j u^i v^j`.
    pub fn hessian_contraction(&self, theta: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        contract_hessians(&self.hessians(theta), u, v)
    }

    /// Closest point of the manifold to `x`, found by damped Newton iteration
    /// on the first-order condition `φ_*ᵀ (x − φ(θ)) = 0` from `theta0`.
    ///
    /// The Newton matrix is `h − Σ_γ (x−φ)^γ ∂²φ^γ`, which is the Hessian of
    /// `½|x − φ|²`; when it is not positive definite the Gauss–Newton matrix
    /// `h` is used instead. A critical point where that Hessian is not
    /// positive definite (e.g. the centre of a circle) is reported as being
    /// outside the tubular neighborhood. Several local minima are not detected.
    pub fn metric_projection(&self, x: &DVector<f64>, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        let fail = || Error::OutsideTubularNeighborhood { start: theta0.iter().copied().collect() };
        let scale = 1.0 + x.amax();
        let mut theta = theta0.clone();
        let mut residual = x - self.point(&theta);
        let mut objective = residual.norm_squared();
        for _ in 0..MAX_PROJECTION_ITERS {
            let j = self.jacobian(&theta);
            let grad = j.transpose() * &residual;
            if grad.amax() <= 1e-15 * scale {
                break;
            }
            let hess = self.hessians(&theta);
            let metric = j.transpose() * &j;
            let mut newton = metric.clone();
            for (g, hg) in hess.iter().enumerate() {
                newton -= hg * residual[g];
            }
            let step = match newton.clone().cholesky() {
                Some(ch) => ch.solve(&grad),
                None => metric.cholesky().ok_or_else(fail)?.solve(&grad),
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial = &theta + &step * lambda;
                let r = x - self.point(&trial);
                let obj = r.norm_squared();
                // Near convergence the objective stalls at rounding level; accept then.
                if obj < objective || obj <= objective * (1.0 + 1e-14) + 1e-30 {
                    theta = trial;
                    residual = r;
                    objective = obj;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted || step.amax() * lambda <= 1e-16 * (1.0 + theta.amax()) {
                break;
            }
        }
        let j = self.jacobian(&theta);
        let grad = j.transpose() * &residual;
        if !theta.iter().all(|v| v.is_finite()) || grad.amax() > 1e-10 * scale {
            return Err(fail());
        }
        // Second-order check: a strict local minimum, not a focal point.
        let mut hess_obj = j.transpose() * &j;
        let floor = 1e-8 * hess_obj.diagonal().amax();
        for (g, hg) in self.hessians(&theta).iter().enumerate() {
            hess_obj -= hg * residual[g];
        }
        let min_eig = hess_obj.symmetric_eigenvalues().min();
        if !(min_eig > floor) {
            return Err(fail());
        }
        Ok(theta)
    }
}

const MAX_PROJECTION_ITERS: usize = 100;

pub(crate) fn contract_hessians(hessians: &[DMatrix<f64>], u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(hessians.len(), hessians.iter().map(|h| u.dot(&(h * v))))
}

/// Pullback metric `h_ij = Σ_γ ∂_iφ^γ ∂_jφ^γ` and its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl MetricTensor {
    pub fn from_jacobian(j: &DMatrix<f64>, theta: &DVector<f64>) -> Result<Self> {
        Self::from_matrix(j.transpose() * j, theta)
    }

    pub fn from_matrix(matrix: DMatrix<f64>, theta: &DVector<f64>) -> Result<Self> {
        let degenerate = |condition| Error::DegenerateChart { theta: theta.iter().copied().collect(), condition };
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(degenerate(f64::INFINITY));
        }
        let eig = matrix.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0) || hi / lo > MAX_CONDITION {
            return Err(degenerate(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
        }
        let inverse = matrix.clone().cholesky().ok_or_else(|| degenerate(hi / lo))?.inverse();
        Ok(Self { matrix, inverse })
    }
}

/// Quadratic covariation rate `g_E^{αβ}` of the driving Brownian motions.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMetric(DMatrix<f64>);

impl NoiseMetric {
    pub fn identity(m: usize) -> Self {
        Self(DMatrix::identity(m, m))
    }

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || (&matrix - matrix.transpose()).amax() > 1e-12 * (1.0 + matrix.amax()) {
            return Err(Error::Config("noise metric must be symmetric".into()));
        }
        if matrix.clone().cholesky().is_none() {
            return Err(Error::Config("noise metric must be positive definite".into()));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.0 == DMatrix::identity(self.dim(), self.dim())
    }

    /// Columns `c_k = Σ_α b_α L_{αk}` with `g = L Lᵀ`, so that
    /// `Σ_{αβ} g^{αβ} T(b_α, b_β) = Σ_k T(c_k, c_k)` for bilinear `T`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        if self.is_identity() {
            return b.clone();
        }
        let l = self.0.clone().cholesky().expect("validated at construction").l();
        b * l
    }
}

/// Test and probe manifolds with closed-form derivatives.
pub mod examples {
    use super::*;

    /// Unit circle `θ ↦ (cos θ, sin θ)` with chart `atan2`.
    pub fn circle() -> Embedding {
        ellipse(1.0, 1.0)
    }

    /// `θ ↦ (a cos θ, b sin θ)`.
    pub fn ellipse(a: f64, b: f64) -> Embedding {
        Embedding::new(1, 2, move |t| DVector::from_vec(vec![a * t[0].cos(), b * t[0].sin()]))
            .with_jacobian(move |t| DMatrix::from_column_slice(2, 1, &[-a * t[0].sin(), b * t[0].cos()]))
            .with_hessians(move |t| {
                vec![
                    DMatrix::from_element(1, 1, -a * t[0].cos()),
                    DMatrix::from_element(1, 1, -b * t[0].sin()),
                ]
            })
            .with_chart(move |x| DVector::from_element(1, (x[1] / b).atan2(x[0] / a)))
    }

    /// Affine embedding `θ ↦ origin + basis θ`.
    pub fn affine(origin: DVector<f64>, basis: DMatrix<f64>) -> Embedding {
        let (r, n) = basis.shape();
        assert_eq!(origin.len(), r);
        let (o, b1, b2) = (origin, basis.clone(), basis);
        Embedding::new(n, r, move |t| &o + &b1 * t)
            .with_jacobian(move |_| b2.clone())
            .with_hessians(move |_| vec![DMatrix::zeros(n, n); r])
    }

    /// Paraboloid graph `(u, v) ↦ (u, v, c (u² + v²))`, a curved 2-manifold in `R³`.
    pub fn paraboloid(c: f64) -> Embedding {
        Embedding::new(2, 3, move |t| DVector::from_vec(vec![t[0], t[1], c * (t[0] * t[0] + t[1] * t[1])]))
            .with_jacobian(move |t| DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0 * c * t[0], 2.0 * c * t[1]]))
            .with_hessians(move |_| {
                vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DMatrix::from_diagonal_element(2, 2, 2.0 * c)]
            })
            .with_chart(|x| DVector::from_vec(vec![x[0], x[1]]))
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn circle_metric_is_unit() {
        let c = circle();
        for t in [-2.0, 0.0, 0.4, 3.0] {
            assert_abs_diff_eq!(c.metric_tensor(&v(&[t])).unwrap().matrix[(0, 0)], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ellipse_metric_at_quarter_turn() {
        // dφ/dθ = (-2, 0) at θ = π/2, from the finite-difference Jacobian.
        let e = ellipse(2.0, 1.0).without_analytic_derivatives();
        let m = e.metric_tensor(&v(&[FRAC_PI_2])).unwrap();
        assert_abs_diff_eq!(m.matrix[(0, 0)], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.inverse[(0, 0)], 0.25, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_chart_is_rejected() {
        let e = Embedding::new(1, 2, |t| v(&[t[0].powi(3), t[0].powi(3)]))
            .with_jacobian(|t| DMatrix::from_column_slice(2, 1, &[3.0 * t[0] * t[0], 3.0 * t[0] * t[0]]));
        assert!(matches!(e.metric_tensor(&v(&[0.0])), Err(Error::DegenerateChart { .. })));
    }

    #[test]
    fn circle_tangent_projection_examples() {
        let c = circle();
        assert_abs_diff_eq!(c.tangent_projection(&v(&[0.0]), &v(&[3.0, 2.0])).unwrap()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.tangent_projection(&v(&[0.0]), &v(&[3.0, 0.0])).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn metric_projection_examples() {
        let c = circle();
        assert_abs_diff_eq!(c.metric_projection(&v(&[2.0, 0.0]), &v(&[0.1])).unwrap()[0], 0.0, epsilon = 1e-12);

        // Dense scan oracle for the closest point to (3, 4).
        let x = v(&[3.0, 4.0]);
        let best = (0..=200_000)
            .map(|k| -std::f64::consts::PI + k as f64 * 2.0 * std::f64::consts::PI / 200_000.0)
            .min_by(|a, b| {
                let da = (x.clone() - c.point(&v(&[*a]))).norm();
                let db = (x.clone() - c.point(&v(&[*b]))).norm();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let theta = c.metric_projection(&x, &v(&[0.9])).unwrap()[0];
        assert_abs_diff_eq!(theta, best, epsilon = 5e-5);
        assert_abs_diff_eq!(theta, 0.927_295_218_001_612_2, epsilon = 1e-12);

        assert!(matches!(
            c.metric_projection(&v(&[0.0, 0.0]), &v(&[0.3])),
            Err(Error::OutsideTubularNeighborhood { .. })
        ));
    }

    #[test]
    fn first_order_condition_holds_at_projection() {
        let e = ellipse(2.0, 0.7);
        let x = v(&[1.1, 1.3]);
        let th = e.metric_projection(&x, &v(&[0.5])).unwrap();
        let g = e.jacobian(&th).transpose() * (x - e.point(&th));
        assert!(g.amax() < 1e-10);
    }

    #[test]
    fn hessian_contraction_examples() {
        let line = affine(v(&[1.0, 2.0]), DMatrix::from_column_slice(2, 1, &[3.0, -1.0]));
        assert_eq!(line.hessian_contraction(&v(&[0.3]), &v(&[2.0]), &v(&[-1.0])), v(&[0.0, 0.0]));
        let c = circle();
        let h = c.hessian_contraction(&v(&[0.0]), &v(&[1.0]), &v(&[1.0]));
        assert_abs_diff_eq!(h[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn finite_difference_fallbacks_match_analytic() {
        for e in [ellipse(2.0, 0.5), paraboloid(0.8)] {
            let fd = e.without_analytic_derivatives();
            let th = DVector::from_fn(e.chart_dim(), |i, _| 0.3 + 0.4 * i as f64);
            let h0 = e.metric_tensor(&th).unwrap().matrix;
            let h1 = fd.metric_tensor(&th).unwrap().matrix;
            assert!((h0 - h1).amax() < 1e-6);
            for (a, b) in e.hessians(&th).iter().zip(fd.hessians(&th)) {
                assert!((a - &b).amax() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn noise_metric_validation_and_whitening() {
        assert!(NoiseMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
        assert!(NoiseMetric::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let g = NoiseMetric::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.7]);
        let c = g.whiten(&b);
        assert!((&c * c.transpose() - &b * g.matrix() * b.transpose()).amax() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn projector_is_symmetric_idempotent(u in -1.0f64..1.0, w in -1.0f64..1.0) {
                let e = paraboloid(0.9);
                let p = e.ambient_projector(&v(&[u, w])).unwrap();
                prop_assert!((&p * &p - &p).amax() < 1e-10);
                prop_assert!((&p - p.transpose()).amax() < 1e-10);
            }

            #[test]
            fn tangent_projection_left_inverts_pushforward(t in -3.0f64..3.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
                let e = paraboloid(0.5);
                let th = v(&[t / 3.0, a / 2.0]);
                let u = v(&[a, b]);
                let pushed = e.jacobian(&th) * &u;
                prop_assert!((e.tangent_projection(&th, &pushed).unwrap() - u).amax() < 1e-10);
            }

            #[test]
            fn hessian_contraction_symmetric(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
                let e = paraboloid(1.3);
                let th = v(&[0.2, -0.1]);
                let (u, w) = (v(&[a, b]), v(&[c, d]));
                prop_assert!((e.hessian_contraction(&th, &u, &w) - e.hessian_contraction(&th, &w, &u)).amax() < 1e-14);
            }

            #[test]
            fn points_on_manifold_are_fixed(t in -3.0f64..3.0) {
                let e = ellipse(1.5, 0.8);
                let th = v(&[t]);
                let back = e.metric_projection(&e.point(&th), &th).unwrap();
                prop_assert!((back - th).amax() < 1e-10);
            }

            #[test]
            fn metric_projection_differential_is_tangent_projection(t in -3.0f64..3.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
                let e = ellipse(1.5, 0.8);
                let th = v(&[t]);
                let dir = v(&[a, b]);
                let x = e.point(&th);
                let quotient = |h: f64| (e.metric_projection(&(&x + &dir * h), &th).unwrap()[0] - t) / h;
                // Richardson extrapolation from h = 1e-3 and 1e-4.
                let (q3, q4) = (quotient(1e-3), quotient(1e-4));
                let rich = q4 + (q4 - q3) / 9.0;
                let exact = e.tangent_projection(&th, &dir).unwrap()[0];
                prop_assert!((rich - exact).abs() < 1e-4, "{} vs {}", rich, exact);
            }
        }
    }
}
