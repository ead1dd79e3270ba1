use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use super::{fmt_float, write_file};
use crate::error::{Error, Result};
use crate::family::{GaussianFamily, MetricMode};
use crate::filter::{Filter, FilterKind, FilterModel};
use crate::reference::{grid_moments, residual, GridDensity, ReferenceSolver};
use crate::sde::NoiseStream;

/// Noise substreams per seed: signal/observation increments and the initial state.
const INCREMENT_STREAM: u64 = 0;
const PRIOR_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterFailure {
    pub step: usize,
    pub time: f64,
    pub message: String,
}

/// One filter's series; shorter than the time grid when the filter failed.
#[derive(Clone, Debug)]
pub struct FilterSeries {
    pub kind: FilterKind,
    pub states: Vec<DVector<f64>>,
    pub res_l2: Vec<f64>,
    pub res_hell: Vec<f64>,
    pub failure: Option<FilterFailure>,
}

impl FilterSeries {
    pub fn residual(&self, mode: MetricMode) -> &[f64] {
        match mode {
            MetricMode::Direct => &self.res_l2,
            MetricMode::Hellinger => &self.res_hell,
        }
    }

    pub fn is_truncated(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub times: Vec<f64>,
    pub signal: Vec<f64>,
    pub increments: Vec<f64>,
    pub dy_sha256: String,
    pub filters: Vec<FilterSeries>,
    /// Reference `(mean, sd)` at every time.
    pub reference: Vec<(f64, f64)>,
    /// Largest near-boundary reference density over the run.
    pub reference_boundary_max: f64,
}

impl RunResult {
    pub fn series(&self, kind: FilterKind) -> Option<&FilterSeries> {
        self.filters.iter().find(|s| s.kind == kind)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed={}, dy_sha256={}", self.seed, self.dy_sha256);
        let _ = writeln!(out, "# reference_boundary_max={}", fmt_float(self.reference_boundary_max));
        for s in self.filters.iter().filter(|s| s.is_truncated()) {
            let f = s.failure.as_ref().expect("truncated");
            let _ = writeln!(out, "# truncated {} at t={}: {}", s.kind, fmt_float(f.time), f.message);
        }
        out.push_str(&header(self.filters.iter().map(|s| s.kind), ""));
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&fmt_float(*t));
            for s in &self.filters {
                match s.states.get(k) {
                    Some(th) => {
                        for v in [th[0], th[1], s.res_l2[k], s.res_hell[k]] {
                            out.push(',');
                            out.push_str(&fmt_float(v));
                        }
                    }
                    None => out.push_str(",,,,"),
                }
            }
            let (m, sd) = self.reference[k];
            let _ = writeln!(out, ",{},{}", fmt_float(m), fmt_float(sd));
        }
        out
    }
}

fn header(kinds: impl Iterator<Item = FilterKind>, extra: &str) -> String {
    let mut h = String::from("t");
    for k in kinds {
        let _ = write!(h, ",{k}.mean,{k}.sd,{k}.res_l2,{k}.res_hell");
        if !extra.is_empty() {
            let _ = write!(h, ",{k}.{extra}");
        }
    }
    h.push_str(",ref.mean,ref.sd\n");
    h
}

/// Seed averages at each time over the runs whose series reach that time.
#[derive(Clone, Debug)]
pub struct SummarySeries {
    pub kind: FilterKind,
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
    pub res_l2: Vec<Option<f64>>,
    pub res_hell: Vec<Option<f64>>,
    pub seeds: Vec<usize>,
}

impl SummarySeries {
    pub fn residual(&self, mode: MetricMode) -> &[Option<f64>] {
        match mode {
            MetricMode::Direct => &self.res_l2,
            MetricMode::Hellinger => &self.res_hell,
        }
    }

    /// Time average of the seed-averaged residual over steps `1..=last`.
    pub fn mean_residual(&self, mode: MetricMode, last: usize) -> Option<f64> {
        let r = self.residual(mode);
        let vals: Vec<f64> = r.get(1..=last.min(r.len() - 1))?.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Clone, Debug)]
pub struct Summary {
    pub times: Vec<f64>,
    pub filters: Vec<SummarySeries>,
    pub ref_mean: Vec<f64>,
    pub ref_sd: Vec<f64>,
}

impl Summary {
    pub fn series(&self, kind: FilterKind) -> Option<&SummarySeries> {
        self.filters.iter().find(|s| s.kind == kind)
    }

    fn from_runs(runs: &[RunResult]) -> Self {
        let times = runs[0].times.clone();
        let n = runs.len() as f64;
        let avg = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        let filters = runs[0]
            .filters
            .iter()
            .enumerate()
            .map(|(i, first)| {
                let mut s = SummarySeries {
                    kind: first.kind,
                    mean: vec![],
                    sd: vec![],
                    res_l2: vec![],
                    res_hell: vec![],
                    seeds: vec![],
                };
                for k in 0..times.len() {
                    let alive: Vec<&FilterSeries> = runs.iter().map(|r| &r.filters[i]).filter(|f| f.states.len() > k).collect();
                    s.mean.push(avg(alive.iter().map(|f| f.states[k][0]).collect()));
                    s.sd.push(avg(alive.iter().map(|f| f.states[k][1]).collect()));
                    s.res_l2.push(avg(alive.iter().map(|f| f.res_l2[k]).collect()));
                    s.res_hell.push(avg(alive.iter().map(|f| f.res_hell[k]).collect()));
                    s.seeds.push(alive.len());
                }
                s
            })
            .collect();
        let ref_mean = (0..times.len()).map(|k| runs.iter().map(|r| r.reference[k].0).sum::<f64>() / n).collect();
        let ref_sd = (0..times.len()).map(|k| runs.iter().map(|r| r.reference[k].1).sum::<f64>() / n).collect();
        Self { times, filters, ref_mean, ref_sd }
    }

    /// Summary table: per-seed columns plus `<filter>.seeds`, the number of runs averaged.
    pub fn to_csv(&self) -> String {
        let mut out = header(self.filters.iter().map(|s| s.kind), "seeds");
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&fmt_float(*t));
            for s in &self.filters {
                let _ = write!(
                    out,
                    ",{},{},{},{},{}",
                    opt(s.mean[k]),
                    opt(s.sd[k]),
                    opt(s.res_l2[k]),
                    opt(s.res_hell[k]),
                    s.seeds[k]
                );
            }
            let _ = writeln!(out, ",{},{}", fmt_float(self.ref_mean[k]), fmt_float(self.ref_sd[k]));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

impl ScenarioResult {
    /// Writes `seed_<seed>.csv` per run and `summary.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
        let mut paths = Vec::new();
        for r in &self.runs {
            let p = dir.join(format!("seed_{}.csv", r.seed));
            write_file(&p, &r.to_csv())?;
            paths.push(p);
        }
        let p = dir.join("summary.csv");
        write_file(&p, &self.summary.to_csv())?;
        paths.push(p);
        Ok(paths)
    }
}

/// Signal path `X_0..X_n` and observation increments `dY_1..dY_n` by Euler-Maruyama.
pub fn simulate_observations(
    model: &FilterModel,
    prior: (f64, f64),
    dt: f64,
    steps: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x0 = prior.0 + prior.1 * NoiseStream::new(seed, PRIOR_STREAM, 1).standard_normals()[0];
    let mut noise = NoiseStream::new(seed, INCREMENT_STREAM, 2);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut dys = Vec::with_capacity(steps);
    let mut x = x0;
    xs.push(x);
    for k in 0..steps {
        let d = noise.increment(dt);
        let (dw, dv) = (d[0], d[1]);
        dys.push(model.observation.value(x) * dt + dv);
        x += model.drift.value(x) * dt + model.diffusion.value(x) * dw;
        if !x.is_finite() {
            return Err(Error::Divergence { step: k + 1, time: (k + 1) as f64 * dt });
        }
        xs.push(x);
    }
    Ok((xs, dys))
}

pub fn increments_sha256(dys: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in dys {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One seed: every rostered filter and the reference see the same `dY`.
pub fn run_seed(config: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let model = config.model()?;
    let steps = config.steps()?;
    let dt = config.run.dt;
    let family = config.family()?;
    let grid = config.grid()?;
    let (mu0, sd0) = (config.prior.mean, config.prior.sd);
    let (signal, dys) = simulate_observations(&model, (mu0, sd0), dt, steps, seed)?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();

    let solver = ReferenceSolver::new(&model, grid.clone())?;
    let mut p = GridDensity::gaussian(grid, mu0, sd0)?;
    let mut reference = Vec::with_capacity(steps + 1);
    let mut densities = Vec::with_capacity(steps + 1);
    let mut boundary_max = p.boundary_value();
    let (m, v) = grid_moments(&p);
    reference.push((m, v.sqrt()));
    densities.push(p.clone());
    for dy in &dys {
        p = solver.step_unchecked(&p, dt, *dy)?;
        boundary_max = boundary_max.max(p.boundary_value());
        let (m, v) = grid_moments(&p);
        reference.push((m, v.sqrt()));
        densities.push(p.clone());
    }

    let theta0 = GaussianFamily::theta(mu0, sd0);
    let filters = config
        .filters()?
        .into_iter()
        .map(|kind| run_filter_series(kind.build_with(&model, &family).as_ref(), &family, &theta0, dt, &dys, &densities))
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult {
        seed,
        times,
        signal,
        dy_sha256: increments_sha256(&dys),
        increments: dys,
        filters,
        reference,
        reference_boundary_max: boundary_max,
    })
}

fn run_filter_series(
    filter: &dyn Filter,
    family: &GaussianFamily,
    theta0: &DVector<f64>,
    dt: f64,
    dys: &[f64],
    densities: &[GridDensity],
) -> Result<FilterSeries> {
    let mut s = FilterSeries {
        kind: filter.kind(),
        states: Vec::with_capacity(dys.len() + 1),
        res_l2: Vec::with_capacity(dys.len() + 1),
        res_hell: Vec::with_capacity(dys.len() + 1),
        failure: None,
    };
    let mut theta = theta0.clone();
    for k in 0..=dys.len() {
        if k > 0 {
            match filter.step(&theta, dt, dys[k - 1]) {
                Ok(next) => theta = next,
                Err(e) => {
                    s.failure = Some(FilterFailure { step: k, time: k as f64 * dt, message: e.to_string() });
                    break;
                }
            }
        }
        s.res_l2.push(residual(&densities[k], family, &theta, MetricMode::Direct)?);
        s.res_hell.push(residual(&densities[k], family, &theta, MetricMode::Hellinger)?);
        s.states.push(theta.clone());
    }
    Ok(s)
}

/// All seeds in parallel; results are in seed order.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    config.validate()?;
    let runs = config.seeds().par_iter().map(|&seed| run_seed(config, seed)).collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_runs(&runs);
    Ok(ScenarioResult { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(eps: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.model.epsilon = eps;
        c.run.horizon = 0.05;
        c.run.dt = 0.01;
        c.run.seeds = super::super::config::Seeds::List(vec![1, 2]);
        c.grid.points = 200;
        c
    }

    #[test]
    fn series_share_the_time_grid() {
        let r = run_scenario(&small(0.05)).unwrap();
        for run in &r.runs {
            assert_eq!(run.times.len(), 6);
            assert_eq!(run.reference.len(), 6);
            assert_eq!(run.filters.len(), 9);
            for s in &run.filters {
                assert!(!s.is_truncated());
                assert_eq!(s.states.len(), 6);
                assert!(s.res_l2.iter().chain(&s.res_hell).all(|r| *r >= 0.0));
            }
        }
        assert_eq!(r.summary.series(FilterKind::Ekf).unwrap().seeds, vec![2; 6]);
    }

    #[test]
    fn same_increments_for_the_same_seed() {
        let c = small(0.05);
        let (a, b) = (run_seed(&c, 3).unwrap(), run_seed(&c, 3).unwrap());
        assert_eq!(a.dy_sha256, b.dy_sha256);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.dy_sha256, run_seed(&c, 4).unwrap().dy_sha256);
        assert_eq!(a.dy_sha256.len(), 64);
    }

    #[test]
    fn csv_layout() {
        let r = run_seed(&small(0.0), 1).unwrap();
        let csv = r.to_csv();
        assert!(!csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# seed=1, dy_sha256="));
        let head = lines.iter().find(|l| l.starts_with("t,")).unwrap();
        assert!(head.starts_with("t,strat_l2.mean,strat_l2.sd,strat_l2.res_l2,strat_l2.res_hell,strat_hell.mean"));
        assert!(head.ends_with(",adf.res_hell,ref.mean,ref.sd"));
        let last = lines.last().unwrap();
        assert_eq!(last.split(',').count(), 1 + 9 * 4 + 2);
        let t: f64 = last.split(',').next().unwrap().parse().unwrap();
        assert_eq!(t, 0.05);
        // 17 significant digits round-trip.
        let v = r.filters[0].states[5][0];
        assert!(csv.contains(&format!("{v:.16e}")));
    }

    #[test]
    fn truncated_series_drop_out_of_the_summary() {
        // A strongly observed linear model collapses the variance; Kalman fails at a coarse step.
        let mut c = small(0.0);
        c.model.preset = "custom".into();
        c.model.observation = vec![0.0, 30.0];
        c.run.horizon = 0.2;
        c.run.dt = 0.05;
        c.run.filters = vec!["kalman".into(), "ekf".into()];
        c.grid.half_width = 4.0;
        let r = run_scenario(&c).unwrap();
        let k = r.runs[0].series(FilterKind::Kalman).unwrap();
        assert!(k.is_truncated());
        let s = r.summary.series(FilterKind::Kalman).unwrap();
        assert_eq!(s.seeds[0], 2);
        assert_eq!(*s.seeds.last().unwrap(), 0);
        assert!(s.res_l2.last().unwrap().is_none());
        assert!(r.summary.to_csv().lines().last().unwrap().contains(",,,,0,"));
        assert!(r.runs[0].to_csv().contains("# truncated kalman at t="));
    }
}
