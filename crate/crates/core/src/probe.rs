//! Monte Carlo order probes: how fast `φ(Y_t)` departs from `X_t` as `t → 0`.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::log_log_slope;
use crate::geometry::Embedding;
use crate::projection::{ProjectionKind, Projector};
use crate::sde::{euler_maruyama_step, ItoSde, NoiseStream};

/// Squared errors below this are treated as round-off.
pub const MACHINE_NOISE: f64 = 1e-20;
/// Largest tolerated fraction of discarded trials per horizon.
pub const MAX_EXIT_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProbeCriterion {
    /// `E|X_t − φ(Y_t)|²`
    StrongAmbient,
    /// `|E[X_t − φ(Y_t)]|²`
    WeakAmbient,
    /// `E|π(X_t) − φ(Y_t)|²`
    StrongMetricProjection,
}

impl ProbeCriterion {
    pub const ALL: [ProbeCriterion; 3] = [Self::StrongAmbient, Self::WeakAmbient, Self::StrongMetricProjection];

    pub fn name(self) -> &'static str {
        match self {
            Self::StrongAmbient => "strong_ambient",
            Self::WeakAmbient => "weak_ambient",
            Self::StrongMetricProjection => "strong_metric_projection",
        }
    }
}

impl fmt::Display for ProbeCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProbeCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown probe criterion `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    pub horizons: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Euler-Maruyama steps per horizon, for both X and Y.
    pub substeps: usize,
    pub theta0: DVector<f64>,
}

impl ProbeOptions {
    pub fn new(theta0: DVector<f64>, horizons: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self { horizons, trials, seed, substeps: 32, theta0 }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub horizon: f64,
    pub error: f64,
    pub exits: usize,
}

#[derive(Clone, Debug)]
pub struct ProbeTable {
    pub kind: ProjectionKind,
    pub criterion: ProbeCriterion,
    pub trials: usize,
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    /// Log-log slope of error against horizon; rejected when every error is round-off.
    pub fn slope(&self) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateFit(format!(
                "{} errors at machine-noise level for {}",
                self.criterion, self.kind
            )));
        }
        let t: Vec<f64> = self.rows.iter().map(|r| r.horizon).collect();
        let e: Vec<f64> = self.rows.iter().map(|r| r.error).collect();
        log_log_slope(&t, &e)
    }

    pub fn is_degenerate(&self) -> bool {
        self.rows.iter().all(|r| r.error <= MACHINE_NOISE)
    }

    /// Slope of the unsquared error, i.e. half of [`Self::slope`].
    pub fn norm_slope(&self) -> Result<f64> {
        self.slope().map(|s| 0.5 * s)
    }
}

/// All three criteria from one set of coupled simulations.
#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub strong_ambient: ProbeTable,
    pub weak_ambient: ProbeTable,
    pub strong_metric_projection: ProbeTable,
}

impl ProbeReport {
    pub fn table(&self, criterion: ProbeCriterion) -> &ProbeTable {
        match criterion {
            ProbeCriterion::StrongAmbient => &self.strong_ambient,
            ProbeCriterion::WeakAmbient => &self.weak_ambient,
            ProbeCriterion::StrongMetricProjection => &self.strong_metric_projection,
        }
    }
}

pub fn order_probe(
    sde: &ItoSde,
    e: &Embedding,
    kind: ProjectionKind,
    criterion: ProbeCriterion,
    opts: &ProbeOptions,
) -> Result<ProbeTable> {
    Ok(order_probe_report(sde, e, kind, opts)?.table(criterion).clone())
}

struct TrialOutcome {
    diff: DVector<f64>,
    metric_sq: f64,
}

pub fn order_probe_report(sde: &ItoSde, e: &Embedding, kind: ProjectionKind, opts: &ProbeOptions) -> Result<ProbeReport> {
    if opts.horizons.is_empty() || opts.trials == 0 || opts.substeps == 0 {
        return Err(Error::Config("probe needs horizons, trials and substeps".into()));
    }
    if let Some(t) = opts.horizons.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Config(format!("probe horizon {t} must be positive")));
    }
    let projected = Projector::new(e.clone()).project(kind, sde)?;
    let chart = &projected.chart_sde;
    let x0 = e.point(&opts.theta0);
    let m = sde.num_noises();
    let nh = opts.horizons.len() as u64;

    let run_trial = |trial: usize| -> Vec<Option<TrialOutcome>> {
        opts.horizons
            .iter()
            .enumerate()
            .map(|(h, &horizon)| {
                let mut noise = NoiseStream::new(opts.seed, trial as u64 * nh + h as u64, m);
                let dt = horizon / opts.substeps as f64;
                let mut x = x0.clone();
                let mut y = opts.theta0.clone();
                for k in 0..opts.substeps {
                    let t = k as f64 * dt;
                    let dw = noise.increment(dt);
                    x = euler_maruyama_step(sde, &x, t, dt, &dw).ok()?;
                    y = euler_maruyama_step(chart, &y, t, dt, &dw).ok()?;
                }
                let phi_y = e.point(&y);
                let pi_x = e.point(&e.metric_projection(&x, &y).ok()?);
                Some(TrialOutcome { metric_sq: (pi_x - &phi_y).norm_squared(), diff: x - phi_y })
            })
            .collect()
    };
    let outcomes: Vec<Vec<Option<TrialOutcome>>> = (0..opts.trials).into_par_iter().map(run_trial).collect();

    let r = e.ambient_dim();
    let mut strong = Vec::new();
    let mut weak = Vec::new();
    let mut metric = Vec::new();
    for (h, &horizon) in opts.horizons.iter().enumerate() {
        let mut sum_diff = DVector::zeros(r);
        let mut sum_sq = 0.0;
        let mut sum_metric = 0.0;
        let mut alive = 0usize;
        for trial in &outcomes {
            if let Some(o) = &trial[h] {
                sum_diff += &o.diff;
                sum_sq += o.diff.norm_squared();
                sum_metric += o.metric_sq;
                alive += 1;
            }
        }
        let exits = opts.trials - alive;
        if exits as f64 > MAX_EXIT_FRACTION * opts.trials as f64 {
            return Err(Error::ProbeInvalid { exits, trials: opts.trials });
        }
        let n = alive as f64;
        strong.push(ProbeRow { horizon, error: sum_sq / n, exits });
        weak.push(ProbeRow { horizon, error: (sum_diff / n).norm_squared(), exits });
        metric.push(ProbeRow { horizon, error: sum_metric / n, exits });
    }
    let table = |criterion, rows| ProbeTable { kind, criterion, trials: opts.trials, rows };
    Ok(ProbeReport {
        strong_ambient: table(ProbeCriterion::StrongAmbient, strong),
        weak_ambient: table(ProbeCriterion::WeakAmbient, weak),
        strong_metric_projection: table(ProbeCriterion::StrongMetricProjection, metric),
    })
}
