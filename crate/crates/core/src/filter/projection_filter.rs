use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::ks::{ks_coefficients, KsCoefficients};
use super::model::FilterModel;
use super::{Filter, FilterKind};
use crate::error::Result;
use crate::family::{family_metric, DensityFamily, GaussianFamily, MetricMode};
use crate::projection::ProjectionKind;

/// Relative θ-step for differentiating `B` in the Stratonovich → Itô conversion.
pub const STRATONOVICH_FD_STEP: f64 = 1e-6;

/// Projection of the Kushner-Stratonovich equation onto a density family.
#[derive(Clone)]
pub struct ProjectionFilter {
    model: FilterModel,
    family: Arc<dyn DensityFamily>,
    projection: ProjectionKind,
    mode: MetricMode,
}

/// Inner products against the tangent and second-derivative functions at θ.
///
/// With `t_i = ∂_iφ`, `H_kl = ∂_k∂_lφ`:
/// `G_ij = ⟨t_i, t_j⟩`, `M_i = ⟨μ, t_i⟩`, `N_i = ⟨Σ, t_i⟩`,
/// `T_klj = ⟨H_kl, t_j⟩` (stored as `t[j][(k, l)]`), `S_kl = ⟨H_kl, Σ⟩`.
struct Assembly {
    g_inv: DMatrix<f64>,
    m: DVector<f64>,
    m_strat: DVector<f64>,
    n: DVector<f64>,
    t: Vec<DMatrix<f64>>,
    s: DMatrix<f64>,
}

impl ProjectionFilter {
    pub fn new(model: FilterModel, projection: ProjectionKind, mode: MetricMode) -> Self {
        Self::with_family(model, Arc::new(GaussianFamily::new()), projection, mode)
    }

    pub fn with_family(model: FilterModel, family: Arc<dyn DensityFamily>, projection: ProjectionKind, mode: MetricMode) -> Self {
        Self { model, family, projection, mode }
    }

    pub fn projection(&self) -> ProjectionKind {
        self.projection
    }

    pub fn mode(&self) -> MetricMode {
        self.mode
    }

    fn assemble(&self, theta: &DVector<f64>) -> Result<Assembly> {
        let fam: &dyn DensityFamily = self.family.as_ref();
        let geo = family_metric(fam, theta, self.mode)?;
        let ks: KsCoefficients<'_> = ks_coefficients(&self.model, fam, theta, self.mode)?;
        let dim = fam.dim();
        let mut asm = Assembly {
            g_inv: geo.inverse.clone(),
            m: DVector::zeros(dim),
            m_strat: DVector::zeros(dim),
            n: DVector::zeros(dim),
            t: vec![DMatrix::zeros(dim, dim); dim],
            s: DMatrix::zeros(dim, dim),
        };
        for &(x, w) in geo.rule() {
            let tan = geo.tangent_ratios(x);
            let hess = geo.hessian_ratios(x);
            let sigma = ks.diffusion_ratio(x);
            asm.m.axpy(w * ks.drift_ratio(x), &tan, 1.0);
            asm.m_strat.axpy(w * ks.stratonovich_drift_ratio(x), &tan, 1.0);
            asm.n.axpy(w * sigma, &tan, 1.0);
            for (j, tj) in asm.t.iter_mut().enumerate() {
                *tj += &hess * (w * tan[j]);
            }
            asm.s += &hess * (w * sigma);
        }
        Ok(asm)
    }

    /// `B = G⁻¹ N`, shared by all three projections.
    fn diffusion_of(asm: &Assembly) -> DVector<f64> {
        &asm.g_inv * &asm.n
    }

    pub fn diffusion(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(Self::diffusion_of(&self.assemble(theta)?))
    }

    /// Stratonovich-form drift `G⁻¹ ⟨μ̄, t⟩`.
    pub fn stratonovich_drift(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let asm = self.assemble(theta)?;
        Ok(&asm.g_inv * &asm.m_strat)
    }

    fn drift_of(&self, theta: &DVector<f64>, asm: &Assembly, b: &DVector<f64>) -> Result<DVector<f64>> {
        // T[B,B]_j = Σ_kl T_klj B^k B^l
        let tbb = DVector::from_fn(b.len(), |j, _| (b.transpose() * &asm.t[j] * b)[0]);
        Ok(match self.projection {
            ProjectionKind::ItoVector => &asm.g_inv * (&asm.m - tbb * 0.5),
            ProjectionKind::ItoJet => {
                // Normal coupling: Σ_kj T_ikj B^k B^j
                let mut coupling = DVector::zeros(b.len());
                for (j, tj) in asm.t.iter().enumerate() {
                    coupling += tj * b * b[j];
                }
                &asm.g_inv * (&asm.m - tbb * 0.5 + &asm.s * b - coupling)
            }
            ProjectionKind::Stratonovich => {
                let mut a = &asm.g_inv * &asm.m_strat;
                for k in 0..theta.len() {
                    let h = STRATONOVICH_FD_STEP * theta[k].abs().max(1.0);
                    let (mut tp, mut tm) = (theta.clone(), theta.clone());
                    tp[k] += h;
                    tm[k] -= h;
                    let db = (self.diffusion(&tp)? - self.diffusion(&tm)?) / (2.0 * h);
                    a.axpy(0.5 * b[k], &db, 1.0);
                }
                a
            }
        })
    }

    pub fn drift(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.coefficients(theta)?.0)
    }
}

impl Filter for ProjectionFilter {
    fn kind(&self) -> FilterKind {
        FilterKind::Projection { projection: self.projection, mode: self.mode }
    }

    fn coefficients(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let asm = self.assemble(theta)?;
        let b = Self::diffusion_of(&asm);
        let a = self.drift_of(theta, &asm, &b)?;
        Ok((a, b))
    }
}
