use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::family::GaussianFamily;
use crate::filter::{FilterKind, FilterModel, ScalarFn};
use crate::grid::Grid;
use crate::projection::ProjectionKind;

/// Environment variable overriding `[output] dir`.
pub const OUT_DIR_ENV: &str = "PROJFILTER_OUT_DIR";

pub const MIN_GRID_POINTS: usize = 100;

/// Scenario file: TOML sections `[model] [prior] [run] [grid] [quadrature] [output] [sweep] [probe]`.
/// Every key has a default, so an empty file is the default cubic-sensor scenario.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub run: RunConfig,
    pub grid: GridConfig,
    pub quadrature: QuadratureConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub probe: ProbeConfig,
}

/// `preset = "cubic_sensor"` uses `epsilon`; `preset = "custom"` reads
/// ascending polynomial coefficients for `f`, `σ` and `b`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: String,
    pub epsilon: f64,
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub observation: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: "cubic_sensor".into(),
            epsilon: 0.05,
            drift: vec![0.0],
            diffusion: vec![1.0],
            observation: vec![0.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: f64,
    pub sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }
}

/// A seed count `n` (seeds `0..n`) or an explicit list.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

impl std::str::FromStr for Seeds {
    type Err = Error;
    /// `"20"` or `"3,5,8"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |e| Error::Config(format!("bad seeds `{s}`: {e}"));
        if s.contains(',') {
            s.split(',').map(|p| p.trim().parse::<u64>().map_err(bad)).collect::<Result<_>>().map(Seeds::List)
        } else {
            s.trim().parse::<u64>().map(Seeds::Count).map_err(bad)
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: f64,
    pub dt: f64,
    pub seeds: Seeds,
    pub filters: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 1e-3,
            seeds: Seeds::Count(20),
            filters: FilterKind::ALL.iter().map(|k| k.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: 8.0, points: 400 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub order: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { order: crate::quadrature::DEFAULT_ORDER }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    /// Chart point `(mean, sd)` at which drifts are compared.
    pub theta: [f64; 2],
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { epsilons: vec![0.01, 0.02, 0.04, 0.07, 0.1], theta: [0.0, 1.0] }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub trials: usize,
    pub horizons: Vec<f64>,
    pub substeps: usize,
    pub seed: u64,
    pub projections: Vec<String>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            trials: 100_000,
            horizons: (4..=10).map(|k| 0.5f64.powi(k)).collect(),
            substeps: 32,
            seed: 0,
            projections: vec!["jet".into(), "vec".into()],
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Sets a dotted key from a command-line string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("{key}: {e}")));
        match key {
            "model.epsilon" => self.model.epsilon = num(value)?,
            "run.dt" => self.run.dt = num(value)?,
            "run.horizon" => self.run.horizon = num(value)?,
            "run.seeds" => self.run.seeds = value.parse()?,
            "output.dir" => self.output.dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown override `{key}`"))),
        }
        Ok(())
    }

    /// Checks every invariant without running anything.
    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.steps()?;
        self.filters()?;
        self.grid()?;
        self.family()?;
        if !(self.prior.sd > 0.0 && self.prior.sd.is_finite() && self.prior.mean.is_finite()) {
            return Err(Error::Config(format!("prior sd must be positive, got {}", self.prior.sd)));
        }
        if self.seeds().is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<FilterModel> {
        let m = &self.model;
        match m.preset.as_str() {
            "cubic_sensor" => {
                if !(m.epsilon >= 0.0 && m.epsilon.is_finite()) {
                    return Err(Error::Config(format!("epsilon must be ≥ 0, got {}", m.epsilon)));
                }
                Ok(FilterModel::cubic_sensor(m.epsilon))
            }
            "custom" => {
                for (name, c) in [("drift", &m.drift), ("diffusion", &m.diffusion), ("observation", &m.observation)] {
                    if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Config(format!("model.{name} needs finite coefficients")));
                    }
                }
                Ok(FilterModel::new(
                    ScalarFn::polynomial(&m.drift),
                    ScalarFn::polynomial(&m.diffusion),
                    ScalarFn::polynomial(&m.observation),
                ))
            }
            other => Err(Error::Config(format!("unknown model preset `{other}`"))),
        }
    }

    /// `T / dt`, required to be an integer.
    pub fn steps(&self) -> Result<usize> {
        let (t, dt) = (self.run.horizon, self.run.dt);
        if !(t > 0.0 && dt > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("horizon {t} and dt {dt} must be positive")));
        }
        let n = t / dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Config(format!("horizon {t} is not a multiple of dt {dt}")));
        }
        Ok(n.round() as usize)
    }

    pub fn filters(&self) -> Result<Vec<FilterKind>> {
        if self.run.filters.is_empty() {
            return Err(Error::Config("empty filter roster".into()));
        }
        let mut out: Vec<FilterKind> = Vec::new();
        for name in &self.run.filters {
            let k: FilterKind = name.parse()?;
            if out.contains(&k) {
                return Err(Error::Config(format!("filter `{name}` listed twice")));
            }
            out.push(k);
        }
        Ok(out)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        if g.points < MIN_GRID_POINTS {
            return Err(Error::Config(format!("grid needs at least {MIN_GRID_POINTS} points, got {}", g.points)));
        }
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(Error::Config(format!("grid half width must be positive, got {}", g.half_width)));
        }
        Grid::new(g.points, g.half_width)
    }

    pub fn family(&self) -> Result<GaussianFamily> {
        if self.quadrature.order == 0 {
            return Err(Error::Config("quadrature order must be positive".into()));
        }
        GaussianFamily::with_quadrature_order(self.quadrature.order)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.run.seeds.to_vec()
    }

    pub fn sweep_epsilons(&self) -> Result<Vec<f64>> {
        let eps = &self.sweep.epsilons;
        if eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("sweep epsilons must be finite and ≥ 0".into()));
        }
        let positive: Vec<f64> = eps.iter().copied().filter(|e| *e > 0.0).collect();
        let (lo, hi) = positive.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
        if positive.len() < 2 || hi < 10.0 * lo * (1.0 - 1e-12) {
            return Err(Error::Config("sweep epsilons must span at least one decade".into()));
        }
        Ok(eps.clone())
    }

    pub fn probe_projections(&self) -> Result<Vec<ProjectionKind>> {
        if self.probe.projections.is_empty() {
            return Err(Error::Config("no probe projections".into()));
        }
        self.probe.projections.iter().map(|p| p.parse()).collect()
    }
}
