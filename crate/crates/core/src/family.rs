//! Parametric density families viewed as submanifolds of L², either through
//! the densities themselves (direct metric) or their square roots (Hellinger).
//!
//! Every function space quantity is handled as a ratio against the weight
//! `w_θ`, where `w_θ = p_θ` (direct) or `√p_θ` (Hellinger). With `l = ln p`:
//!
//! * tangent vectors `∂_i w = w · κ ∂_i l`,
//! * second derivatives `∂_i∂_j w = w · (κ ∂_i∂_j l + κ² ∂_i l ∂_j l)`,
//!
//! with `κ = 1` (direct) or `½` (Hellinger), and all inner products become
//! `⟨w r₁, w r₂⟩ = ∫ w² r₁ r₂ dx`, evaluated by a rule tailored to `w²`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Embedding;
use crate::grid::Grid;
use crate::quadrature::GaussHermite;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricMode {
    /// `⟨p₁, p₂⟩` on densities.
    Direct,
    /// `⟨√p₁, √p₂⟩` on square roots.
    Hellinger,
}

impl MetricMode {
    pub const ALL: [MetricMode; 2] = [Self::Direct, Self::Hellinger];

    /// Short name used in filter labels.
    pub fn short_name(self) -> &'static str {
        match self {
            Self::Direct => "l2",
            Self::Hellinger => "hell",
        }
    }

    /// Exponent of `p` in the weight `w = p^κ`.
    pub fn kappa(self) -> f64 {
        match self {
            Self::Direct => 1.0,
            Self::Hellinger => 0.5,
        }
    }
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Hellinger => "hellinger",
        })
    }
}

impl std::str::FromStr for MetricMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" | "l2" => Ok(Self::Direct),
            "hellinger" | "hell" | "sqrt" => Ok(Self::Hellinger),
            other => Err(Error::Config(format!("unknown metric mode `{other}`"))),
        }
    }
}

const FD_STEP: f64 = 1e-4;
const DEFAULT_RULE_POINTS: usize = 4001;

/// A finite-dimensional family of strictly positive densities on the real line.
///
/// Only [`Self::log_density`], [`Self::check`] and [`Self::support`] are
/// required; derivatives default to central differences and integrals to a
/// trapezoid rule on the support.
pub trait DensityFamily: Send + Sync {
    fn dim(&self) -> usize;

    /// Rejects parameters outside the family.
    fn check(&self, theta: &DVector<f64>) -> Result<()>;

    fn log_density(&self, theta: &DVector<f64>, x: f64) -> f64;

    /// Interval carrying all but a negligible fraction of the mass.
    fn support(&self, theta: &DVector<f64>) -> (f64, f64);

    fn log_density_gradient(&self, theta: &DVector<f64>, x: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let h = FD_STEP * (1.0 + theta[i].abs());
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp[i] += h;
            tm[i] -= h;
            (self.log_density(&tp, x) - self.log_density(&tm, x)) / (2.0 * h)
        })
    }

    fn log_density_hessian(&self, theta: &DVector<f64>, x: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = FD_STEP * (1.0 + theta[j].abs());
            let (mut tp, mut tm) = (theta.clone(), theta.clone());
            tp[j] += h;
            tm[j] -= h;
            let col = (self.log_density_gradient(&tp, x) - self.log_density_gradient(&tm, x)) / (2.0 * h);
            out.set_column(j, &col);
        }
        (&out + out.transpose()) * 0.5
    }

    /// `(∂_x l, ∂_x² l)`.
    fn log_density_x_derivatives(&self, theta: &DVector<f64>, x: f64) -> (f64, f64) {
        let h = FD_STEP * (1.0 + x.abs());
        let (lm, l0, lp) = (self.log_density(theta, x - h), self.log_density(theta, x), self.log_density(theta, x + h));
        ((lp - lm) / (2.0 * h), (lp - 2.0 * l0 + lm) / (h * h))
    }

    /// Nodes and weights `(x_q, ω_q)` with `Σ ω_q f(x_q) ≈ ∫ w_θ(x)² f(x) dx`.
    fn weighted_rule(&self, theta: &DVector<f64>, mode: MetricMode) -> Result<Vec<(f64, f64)>> {
        self.check(theta)?;
        let (a, b) = self.support(theta);
        let n = DEFAULT_RULE_POINTS;
        let dx = (b - a) / (n - 1) as f64;
        Ok((0..n)
            .map(|k| {
                let x = a + k as f64 * dx;
                let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                (x, end * dx * (2.0 * mode.kappa() * self.log_density(theta, x)).exp())
            })
            .collect())
    }

    fn density(&self, theta: &DVector<f64>, x: f64) -> f64 {
        self.log_density(theta, x).exp()
    }

    fn sqrt_density(&self, theta: &DVector<f64>, x: f64) -> f64 {
        (0.5 * self.log_density(theta, x)).exp()
    }

    /// `w_θ(x)`.
    fn weight(&self, theta: &DVector<f64>, x: f64, mode: MetricMode) -> f64 {
        (mode.kappa() * self.log_density(theta, x)).exp()
    }

    fn weight_gradient(&self, theta: &DVector<f64>, x: f64, mode: MetricMode) -> DVector<f64> {
        tangent_ratios(self.log_density_gradient(theta, x), mode) * self.weight(theta, x, mode)
    }

    fn weight_hessian(&self, theta: &DVector<f64>, x: f64, mode: MetricMode) -> DMatrix<f64> {
        let g = self.log_density_gradient(theta, x);
        hessian_ratios(&g, &self.log_density_hessian(theta, x), mode) * self.weight(theta, x, mode)
    }

    fn density_gradient(&self, theta: &DVector<f64>, x: f64) -> DVector<f64> {
        self.weight_gradient(theta, x, MetricMode::Direct)
    }

    fn density_hessian(&self, theta: &DVector<f64>, x: f64) -> DMatrix<f64> {
        self.weight_hessian(theta, x, MetricMode::Direct)
    }

    fn sqrt_density_gradient(&self, theta: &DVector<f64>, x: f64) -> DVector<f64> {
        self.weight_gradient(theta, x, MetricMode::Hellinger)
    }

    fn sqrt_density_hessian(&self, theta: &DVector<f64>, x: f64) -> DMatrix<f64> {
        self.weight_hessian(theta, x, MetricMode::Hellinger)
    }

    /// `E_θ f`.
    fn expectation(&self, theta: &DVector<f64>, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        Ok(self.weighted_rule(theta, MetricMode::Hellinger)?.iter().map(|&(x, w)| w * f(x)).sum())
    }
}

/// `κ ∂_i l`.
pub fn tangent_ratios(log_gradient: DVector<f64>, mode: MetricMode) -> DVector<f64> {
    log_gradient * mode.kappa()
}

/// `κ ∂_i∂_j l + κ² ∂_i l ∂_j l`.
pub fn hessian_ratios(log_gradient: &DVector<f64>, log_hessian: &DMatrix<f64>, mode: MetricMode) -> DMatrix<f64> {
    let k = mode.kappa();
    log_hessian * k + log_gradient * log_gradient.transpose() * (k * k)
}

/// `N(θ¹, (θ²)²)` with `θ² > 0`.
#[derive(Clone, Debug, Default)]
pub struct GaussianFamily {
    quadrature: GaussHermite,
}

impl GaussianFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_quadrature_order(order: usize) -> Result<Self> {
        Ok(Self { quadrature: GaussHermite::new(order)? })
    }

    pub fn quadrature(&self) -> &GaussHermite {
        &self.quadrature
    }

    pub fn theta(mean: f64, sd: f64) -> DVector<f64> {
        DVector::from_vec(vec![mean, sd])
    }
}

impl DensityFamily for GaussianFamily {
    fn dim(&self) -> usize {
        2
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::Shape { expected: "θ = (mean, sd)".into(), got: format!("length {}", theta.len()) });
        }
        if !(theta[1] > 0.0) || !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::Boundary { theta: theta.iter().copied().collect() });
        }
        Ok(())
    }

    fn log_density(&self, theta: &DVector<f64>, x: f64) -> f64 {
        let z = (x - theta[0]) / theta[1];
        -0.5 * z * z - theta[1].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    fn support(&self, theta: &DVector<f64>) -> (f64, f64) {
        (theta[0] - 12.0 * theta[1], theta[0] + 12.0 * theta[1])
    }

    fn log_density_gradient(&self, theta: &DVector<f64>, x: f64) -> DVector<f64> {
        let s = theta[1];
        let z = (x - theta[0]) / s;
        DVector::from_vec(vec![z / s, (z * z - 1.0) / s])
    }

    fn log_density_hessian(&self, theta: &DVector<f64>, x: f64) -> DMatrix<f64> {
        let s = theta[1];
        let z = (x - theta[0]) / s;
        let s2 = s * s;
        DMatrix::from_row_slice(2, 2, &[-1.0 / s2, -2.0 * z / s2, -2.0 * z / s2, (1.0 - 3.0 * z * z) / s2])
    }

    fn log_density_x_derivatives(&self, theta: &DVector<f64>, x: f64) -> (f64, f64) {
        let s = theta[1];
        (-(x - theta[0]) / (s * s), -1.0 / (s * s))
    }

    fn weighted_rule(&self, theta: &DVector<f64>, mode: MetricMode) -> Result<Vec<(f64, f64)>> {
        self.check(theta)?;
        let (mean, sd) = (theta[0], theta[1]);
        Ok(match mode {
            // p² = N(μ, σ²/2) / (2σ√π)
            MetricMode::Direct => {
                let c = 1.0 / (2.0 * sd * std::f64::consts::PI.sqrt());
                self.quadrature
                    .normal_rule(mean, sd * std::f64::consts::FRAC_1_SQRT_2)
                    .into_iter()
                    .map(|(x, w)| (x, c * w))
                    .collect()
            }
            MetricMode::Hellinger => self.quadrature.normal_rule(mean, sd),
        })
    }

    fn expectation(&self, theta: &DVector<f64>, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        self.check(theta)?;
        Ok(self.quadrature.normal(theta[0], theta[1], f))
    }
}

/// Metric, inverse and quadrature at one point of a family.
pub struct FamilyGeometry<'a> {
    family: &'a dyn DensityFamily,
    pub theta: DVector<f64>,
    pub mode: MetricMode,
    pub metric: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    rule: Vec<(f64, f64)>,
}

impl fmt::Debug for FamilyGeometry<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilyGeometry")
            .field("theta", &self.theta)
            .field("mode", &self.mode)
            .field("metric", &self.metric)
            .finish()
    }
}

pub fn family_metric<'a>(family: &'a dyn DensityFamily, theta: &DVector<f64>, mode: MetricMode) -> Result<FamilyGeometry<'a>> {
    let rule = family.weighted_rule(theta, mode)?;
    let n = family.dim();
    let mut metric = DMatrix::zeros(n, n);
    for &(x, w) in &rule {
        let t = tangent_ratios(family.log_density_gradient(theta, x), mode);
        metric += &t * t.transpose() * w;
    }
    let degenerate = || Error::DegenerateFamily { theta: theta.iter().copied().collect() };
    let inverse = metric.clone().cholesky().ok_or_else(degenerate)?.inverse();
    if (&metric * &inverse - DMatrix::identity(n, n)).amax() > 1e-8 {
        return Err(degenerate());
    }
    Ok(FamilyGeometry { family, theta: theta.clone(), mode, metric, inverse, rule })
}

impl FamilyGeometry<'_> {
    /// `(x_q, ω_q)` for `∫ w_θ² f`.
    pub fn rule(&self) -> &[(f64, f64)] {
        &self.rule
    }

    /// `∂_i w / w` at `x`.
    pub fn tangent_ratios(&self, x: f64) -> DVector<f64> {
        tangent_ratios(self.family.log_density_gradient(&self.theta, x), self.mode)
    }

    /// `∂_i∂_j w / w` at `x`.
    pub fn hessian_ratios(&self, x: f64) -> DMatrix<f64> {
        let g = self.family.log_density_gradient(&self.theta, x);
        hessian_ratios(&g, &self.family.log_density_hessian(&self.theta, x), self.mode)
    }

    /// Tangent functions `∂_i w(x)`.
    pub fn tangent(&self, x: f64) -> DVector<f64> {
        self.tangent_ratios(x) * self.family.weight(&self.theta, x, self.mode)
    }

    /// Dual basis `π^i(x) = g^{ij} ∂_j w(x)`.
    pub fn dual_basis(&self, x: f64) -> DVector<f64> {
        &self.inverse * self.tangent(x)
    }

    /// `⟨w r₁, w r₂⟩` for ratio functions given as a single product `r₁ r₂`.
    pub fn inner_ratio(&self, product: impl Fn(f64) -> f64) -> f64 {
        self.rule.iter().map(|&(x, w)| w * product(x)).sum()
    }
}

/// Grid discretization of a family's L² image.
#[derive(Clone, Debug)]
pub struct L2Representation {
    pub mode: MetricMode,
    pub grid: Grid,
}

impl L2Representation {
    pub fn new(mode: MetricMode, grid: Grid) -> Self {
        Self { mode, grid }
    }

    /// Grid values of `w_θ`.
    pub fn embed(&self, family: &dyn DensityFamily, theta: &DVector<f64>) -> Vec<f64> {
        self.grid.map(|x| family.weight(theta, x, self.mode))
    }

    /// Grid values of the tangent functions, one vector per coordinate.
    pub fn tangents(&self, family: &dyn DensityFamily, theta: &DVector<f64>) -> Vec<Vec<f64>> {
        let cols: Vec<DVector<f64>> = self.grid.points().iter().map(|&x| family.weight_gradient(theta, x, self.mode)).collect();
        (0..family.dim()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }

    /// Metric tensor from trapezoid inner products on the grid.
    pub fn grid_metric(&self, family: &dyn DensityFamily, theta: &DVector<f64>) -> DMatrix<f64> {
        let t = self.tangents(family, theta);
        let n = family.dim();
        DMatrix::from_fn(n, n, |i, j| self.grid.inner(&t[i], &t[j]))
    }

    /// The family as a submanifold of `R^N`, scaled by square-root trapezoid
    /// weights so the Euclidean metric matches the grid L² metric.
    pub fn to_embedding<F: DensityFamily + Clone + 'static>(&self, family: F) -> Embedding {
        let n = family.dim();
        let family = Arc::new(family);
        let sqrt_w: Arc<Vec<f64>> = Arc::new(self.grid.weights().iter().map(|w| w.sqrt()).collect());
        let xs: Arc<Vec<f64>> = Arc::new(self.grid.points().to_vec());
        let mode = self.mode;
        let (f1, s1, x1) = (family.clone(), sqrt_w.clone(), xs.clone());
        let (f2, s2, x2) = (family.clone(), sqrt_w.clone(), xs.clone());
        let (f3, s3, x3) = (family, sqrt_w, xs);
        Embedding::new(n, x1.len(), move |th| DVector::from_fn(x1.len(), |k, _| s1[k] * f1.weight(th, x1[k], mode)))
            .with_jacobian(move |th| {
                let mut j = DMatrix::zeros(x2.len(), n);
                for (k, &x) in x2.iter().enumerate() {
                    j.set_row(k, &(f2.weight_gradient(th, x, mode) * s2[k]).transpose());
                }
                j
            })
            .with_hessians(move |th| x3.iter().enumerate().map(|(k, &x)| f3.weight_hessian(th, x, mode) * s3[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn th(m: f64, s: f64) -> DVector<f64> {
        GaussianFamily::theta(m, s)
    }

    /// Gaussian family without analytic overrides: exercises the trait defaults.
    #[derive(Clone)]
    struct PlainGaussian;

    impl DensityFamily for PlainGaussian {
        fn dim(&self) -> usize {
            2
        }
        fn check(&self, theta: &DVector<f64>) -> Result<()> {
            if theta[1] > 0.0 {
                Ok(())
            } else {
                Err(Error::Boundary { theta: theta.iter().copied().collect() })
            }
        }
        fn log_density(&self, theta: &DVector<f64>, x: f64) -> f64 {
            let z = (x - theta[0]) / theta[1];
            -0.5 * z * z - theta[1].ln() - 0.5 * (2.0 * PI).ln()
        }
        fn support(&self, theta: &DVector<f64>) -> (f64, f64) {
            (theta[0] - 12.0 * theta[1], theta[0] + 12.0 * theta[1])
        }
    }

    #[test]
    fn density_examples() {
        let g = GaussianFamily::new();
        assert_abs_diff_eq!(g.density(&th(0.0, 1.0), 0.0), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.density(&th(0.0, 1.0), 0.0), 0.39894, epsilon = 1e-5);
        let grid = Grid::new(801, 10.0).unwrap();
        let dp = grid.map(|x| g.density_gradient(&th(0.0, 1.0), x)[0]);
        assert_abs_diff_eq!(grid.integrate(&dp), 0.0, epsilon = 1e-14);
        assert!(matches!(g.check(&th(0.0, 0.0)), Err(Error::Boundary { .. })));
        assert!(matches!(g.check(&th(0.0, -1.0)), Err(Error::Boundary { .. })));
    }

    #[test]
    fn hellinger_metric_is_quarter_fisher() {
        let g = GaussianFamily::new();
        for (m, s) in [(0.0, 1.0), (1.5, 0.3), (-2.0, 2.5)] {
            let geo = family_metric(&g, &th(m, s), MetricMode::Hellinger).unwrap();
            assert_abs_diff_eq!(geo.metric[(0, 0)], 1.0 / (4.0 * s * s), epsilon = 1e-12);
            assert_abs_diff_eq!(geo.metric[(1, 1)], 1.0 / (2.0 * s * s), epsilon = 1e-12);
            assert_abs_diff_eq!(geo.metric[(0, 1)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn direct_metric_closed_form() {
        // ∫ p² z²/σ² dx = (2πσ³)^{-1} ∫ z² e^{-z²} dz = 1/(4√π σ³).
        let g = GaussianFamily::new();
        let geo = family_metric(&g, &th(0.0, 1.0), MetricMode::Direct).unwrap();
        assert_abs_diff_eq!(geo.metric[(0, 0)], 1.0 / (4.0 * PI.sqrt()), epsilon = 1e-14);
        // Trapezoid oracle.
        let grid = Grid::new(4001, 12.0).unwrap();
        let dp = grid.map(|x| g.density_gradient(&th(0.0, 1.0), x)[0]);
        assert_abs_diff_eq!(geo.metric[(0, 0)], grid.inner(&dp, &dp), epsilon = 1e-12);
    }

    #[test]
    fn metric_translation_invariant() {
        let g = GaussianFamily::new();
        for mode in MetricMode::ALL {
            let base = family_metric(&g, &th(0.0, 0.7), mode).unwrap().metric;
            for k in 0..10 {
                let m = -3.0 + 0.6 * k as f64;
                let other = family_metric(&g, &th(m, 0.7), mode).unwrap().metric;
                assert!((&base - other).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn quadrature_order_converged() {
        let (q40, q80) = (GaussianFamily::new(), GaussianFamily::with_quadrature_order(80).unwrap());
        for mode in MetricMode::ALL {
            let a = family_metric(&q40, &th(0.4, 1.3), mode).unwrap().metric;
            let b = family_metric(&q80, &th(0.4, 1.3), mode).unwrap().metric;
            assert!((a - b).amax() < 1e-9);
        }
    }

    #[test]
    fn expectation_examples() {
        let g = GaussianFamily::new();
        assert_abs_diff_eq!(g.expectation(&th(0.3, 0.8), &|_| 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.expectation(&th(0.0, 1.0), &|x| x + 0.05 * x.powi(3)).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.expectation(&th(1.0, 2.0), &|x| x * x).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn trait_defaults_match_closed_forms() {
        let (g, p) = (GaussianFamily::new(), PlainGaussian);
        let t = th(0.4, 1.2);
        for x in [-1.0, 0.2, 2.5] {
            assert!((g.log_density_gradient(&t, x) - p.log_density_gradient(&t, x)).amax() < 1e-6);
            assert!((g.log_density_hessian(&t, x) - p.log_density_hessian(&t, x)).amax() < 1e-5);
            let (a, b) = (g.log_density_x_derivatives(&t, x), p.log_density_x_derivatives(&t, x));
            assert!((a.0 - b.0).abs() < 1e-7 && (a.1 - b.1).abs() < 1e-5);
        }
        for mode in MetricMode::ALL {
            let a = family_metric(&g, &t, mode).unwrap().metric;
            let b = family_metric(&p, &t, mode).unwrap().metric;
            assert!((a - b).amax() < 1e-7, "{mode}");
        }
        assert_abs_diff_eq!(p.expectation(&t, &|x| x * x).unwrap(), 0.16 + 1.44, epsilon = 1e-9);
    }

    #[test]
    fn grid_and_quadrature_inner_products_agree() {
        let g = GaussianFamily::new();
        let rep = |mode| L2Representation::new(mode, Grid::new(1601, 16.0).unwrap());
        for mode in MetricMode::ALL {
            for (m, s) in [(0.0, 1.0), (1.0, 0.5), (-2.0, 2.0)] {
                let q = family_metric(&g, &th(m, s), mode).unwrap().metric;
                let gr = rep(mode).grid_metric(&g, &th(m, s));
                assert!((q - gr).amax() < 1e-6, "{mode} ({m},{s})");
            }
        }
    }

    #[test]
    fn dual_basis_against_grid_tangents() {
        let g = GaussianFamily::new();
        let rep = L2Representation::new(MetricMode::Hellinger, Grid::new(1601, 14.0).unwrap());
        for mode in MetricMode::ALL {
            let rep = L2Representation { mode, ..rep.clone() };
            let t = th(0.5, 1.1);
            let geo = family_metric(&g, &t, mode).unwrap();
            let tangents = rep.tangents(&g, &t);
            let duals: Vec<DVector<f64>> = rep.grid.points().iter().map(|&x| geo.dual_basis(x)).collect();
            for i in 0..2 {
                let pi_i: Vec<f64> = duals.iter().map(|d| d[i]).collect();
                for (j, tj) in tangents.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(rep.grid.inner(&pi_i, tj), expected, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn grid_integrals_stable_under_domain_extension() {
        let g = GaussianFamily::new();
        for mode in MetricMode::ALL {
            for (m, s) in [(2.0, 3.0), (-2.0, 0.2), (0.0, 1.0)] {
                // Same spacing on both domains.
                let a = L2Representation::new(mode, Grid::new(4001, 40.0).unwrap()).grid_metric(&g, &th(m, s));
                let b = L2Representation::new(mode, Grid::new(6001, 60.0).unwrap()).grid_metric(&g, &th(m, s));
                assert!((a - b).amax() < 1e-8, "{mode} ({m},{s})");
            }
        }
    }

    #[test]
    fn grid_embedding_metric_matches_family_metric() {
        let rep = L2Representation::new(MetricMode::Hellinger, Grid::new(801, 10.0).unwrap());
        let e = rep.to_embedding(GaussianFamily::new());
        let t = th(0.2, 0.9);
        let g = GaussianFamily::new();
        let fam = family_metric(&g, &t, MetricMode::Hellinger).unwrap().metric;
        assert!((e.metric_tensor(&t).unwrap().matrix - fam).amax() < 1e-6);
        // Metric projection recovers θ from its own image.
        let back = e.metric_projection(&e.point(&t), &th(0.0, 1.0)).unwrap();
        assert!((back - t).amax() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn density_hessian_matches_finite_differences(m in -2.0f64..2.0, s in 0.3f64..2.5, x in -3.0f64..3.0) {
            let g = GaussianFamily::new();
            let t = th(m, s);
            let h = 1e-4;
            let analytic = g.density_hessian(&t, x);
            for j in 0..2 {
                let (mut tp, mut tm) = (t.clone(), t.clone());
                tp[j] += h;
                tm[j] -= h;
                let col = (g.density_gradient(&tp, x) - g.density_gradient(&tm, x)) / (2.0 * h);
                for i in 0..2 {
                    prop_assert!((analytic[(i, j)] - col[i]).abs() < 1e-5);
                }
            }
        }

        #[test]
        fn hellinger_metric_closed_form(m in -3.0f64..3.0, s in 0.2f64..3.0) {
            let g = GaussianFamily::new();
            let geo = family_metric(&g, &th(m, s), MetricMode::Hellinger).unwrap();
            prop_assert!((geo.metric[(0, 0)] - 0.25 / (s * s)).abs() < 1e-8);
            prop_assert!((geo.metric[(1, 1)] - 0.5 / (s * s)).abs() < 1e-8);
            prop_assert!(geo.metric[(0, 1)].abs() < 1e-8);
        }

        #[test]
        fn hellinger_is_quarter_of_direct_structure_on_sqrt(m in -2.0f64..2.0, s in 0.3f64..2.0, x in -3.0f64..3.0) {
            // ∂√p = ½ √p ∂l.
            let g = GaussianFamily::new();
            let t = th(m, s);
            let lhs = g.sqrt_density_gradient(&t, x);
            let rhs = g.log_density_gradient(&t, x) * (0.5 * g.sqrt_density(&t, x));
            prop_assert!((lhs - rhs).amax() < 1e-14);
        }
    }
}
