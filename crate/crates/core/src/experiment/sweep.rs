use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::config::ScenarioConfig;
use super::{fmt_float, write_file};
use crate::error::Result;
use crate::family::{GaussianFamily, MetricMode};
use crate::filter::{AdfFilter, Filter, FilterModel, ProjectionFilter};
use crate::fit::log_log_slope;
use crate::projection::ProjectionKind;

/// Differences at or below this are exact agreement.
pub const EXACT_MATCH: f64 = 1e-10;

/// `|A_kind − A_adf|` (Euclidean) for each projection, Hellinger mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub differences: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepSlope {
    Slope(f64),
    ExactMatch,
}

impl SweepSlope {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Slope(s) => Some(s),
            Self::ExactMatch => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub theta: DVector<f64>,
    pub rows: Vec<SweepRow>,
    /// Fitted over the rows with `ε > 0`, in [`ProjectionKind::ALL`] order.
    pub slopes: [SweepSlope; 3],
}

impl SweepTable {
    pub fn slope(&self, kind: ProjectionKind) -> SweepSlope {
        self.slopes[index(kind)]
    }

    pub fn difference(&self, row: usize, kind: ProjectionKind) -> f64 {
        self.rows[row].differences[index(kind)]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,strat,vec,jet\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_float(r.epsilon),
                fmt_float(r.differences[0]),
                fmt_float(r.differences[1]),
                fmt_float(r.differences[2])
            );
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from("projection,slope\n");
        for kind in ProjectionKind::ALL {
            let s = match self.slope(kind) {
                SweepSlope::Slope(v) => fmt_float(v),
                SweepSlope::ExactMatch => "exact".into(),
            };
            let _ = writeln!(out, "{},{s}", short(kind));
        }
        out
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| crate::Error::Io { path: dir.to_path_buf(), source })?;
        write_file(&dir.join("epsilon_sweep.csv"), &self.to_csv())?;
        write_file(&dir.join("epsilon_slopes.csv"), &self.slopes_csv())
    }
}

fn index(kind: ProjectionKind) -> usize {
    ProjectionKind::ALL.iter().position(|k| *k == kind).expect("listed")
}

fn short(kind: ProjectionKind) -> &'static str {
    match kind {
        ProjectionKind::Stratonovich => "strat",
        ProjectionKind::ItoVector => "vec",
        ProjectionKind::ItoJet => "jet",
    }
}

/// Hellinger-mode drift gaps to ADF on the cubic sensor at one `ε`.
pub fn drift_differences(epsilon: f64, theta: &DVector<f64>, family: &GaussianFamily) -> Result<[f64; 3]> {
    let model = FilterModel::cubic_sensor(epsilon);
    let (a_adf, _) = AdfFilter::with_family(model.clone(), family.clone()).coefficients(theta)?;
    let mut out = [0.0; 3];
    for (i, kind) in ProjectionKind::ALL.into_iter().enumerate() {
        let f = ProjectionFilter::with_family(model.clone(), std::sync::Arc::new(family.clone()), kind, MetricMode::Hellinger);
        out[i] = (f.drift(theta)? - &a_adf).norm();
    }
    Ok(out)
}

pub fn epsilon_sweep(config: &ScenarioConfig, epsilons: &[f64]) -> Result<SweepTable> {
    let mut c = config.clone();
    c.sweep.epsilons = epsilons.to_vec();
    let epsilons = c.sweep_epsilons()?;
    let family = c.family()?;
    let theta = GaussianFamily::theta(c.sweep.theta[0], c.sweep.theta[1]);
    let rows = epsilons
        .iter()
        .map(|&epsilon| Ok(SweepRow { epsilon, differences: drift_differences(epsilon, &theta, &family)? }))
        .collect::<Result<Vec<_>>>()?;
    let fit_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    let xs: Vec<f64> = fit_rows.iter().map(|r| r.epsilon).collect();
    let mut slopes = [SweepSlope::ExactMatch; 3];
    for (i, slope) in slopes.iter_mut().enumerate() {
        let ys: Vec<f64> = fit_rows.iter().map(|r| r.differences[i]).collect();
        if ys.iter().any(|d| *d > EXACT_MATCH) {
            *slope = SweepSlope::Slope(log_log_slope(&xs, &ys)?);
        }
    }
    Ok(SweepTable { theta, rows, slopes })
}
