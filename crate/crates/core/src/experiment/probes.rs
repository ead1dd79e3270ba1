use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::config::ScenarioConfig;
use super::{fmt_float, write_file};
use crate::error::{Error, Result};
use crate::geometry::examples::circle;
use crate::probe::{order_probe_report, ProbeCriterion, ProbeOptions, ProbeReport};
use crate::projection::ProjectionKind;
use crate::sde::ItoSde;

/// Brownian motion in the plane: `a = 0`, `b = I₂`.
pub fn planar_brownian_motion() -> ItoSde {
    ItoSde::new(2, 2, |_, _| DVector::zeros(2), |_, _| DMatrix::identity(2, 2))
}

#[derive(Clone, Debug)]
pub struct ProbeSummary {
    pub reports: Vec<ProbeReport>,
}

impl ProbeSummary {
    pub fn report(&self, kind: ProjectionKind) -> Option<&ProbeReport> {
        self.reports.iter().find(|r| r.strong_ambient.kind == kind)
    }

    /// Squared-error slope, or `None` for a round-off-level table.
    pub fn slope(&self, kind: ProjectionKind, criterion: ProbeCriterion) -> Option<Result<f64>> {
        let t = self.report(kind)?.table(criterion);
        (!t.is_degenerate()).then(|| t.slope())
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("projection,criterion,horizon,error,exits\n");
        for r in &self.reports {
            for c in ProbeCriterion::ALL {
                let t = r.table(c);
                for row in &t.rows {
                    let _ = writeln!(out, "{},{c},{},{},{}", t.kind, fmt_float(row.horizon), fmt_float(row.error), row.exits);
                }
            }
        }
        out
    }

    /// `slope` is for squared errors, `norm_slope` for the unsquared norm.
    pub fn slopes_csv(&self) -> Result<String> {
        let mut out = String::from("projection,criterion,slope,norm_slope\n");
        for r in &self.reports {
            for c in ProbeCriterion::ALL {
                let t = r.table(c);
                let (s, n) = if t.is_degenerate() {
                    ("degenerate".to_string(), "degenerate".to_string())
                } else {
                    (fmt_float(t.slope()?), fmt_float(t.norm_slope()?))
                };
                let _ = writeln!(out, "{},{c},{s},{n}", t.kind);
            }
        }
        Ok(out)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        write_file(&dir.join("probe_errors.csv"), &self.rows_csv())?;
        write_file(&dir.join("probe_slopes.csv"), &self.slopes_csv()?)
    }
}

/// Order probes of the unit circle started at `(1, 0)`, one report per configured projection.
pub fn probe_orders(config: &ScenarioConfig) -> Result<ProbeSummary> {
    let p = &config.probe;
    let kinds = config.probe_projections()?;
    let opts = ProbeOptions::new(DVector::zeros(1), p.horizons.clone(), p.trials, p.seed).with_substeps(p.substeps);
    let (sde, e) = (planar_brownian_motion(), circle());
    let reports = kinds.into_iter().map(|k| order_probe_report(&sde, &e, k, &opts)).collect::<Result<Vec<_>>>()?;
    Ok(ProbeSummary { reports })
}
