use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use projfilter_core::experiment::{epsilon_sweep, probe_orders, run_scenario, ScenarioConfig, SweepSlope, OUT_DIR_ENV};
use projfilter_core::probe::ProbeCriterion;
use projfilter_core::{Error, MetricMode, ProjectionKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "projfilter", version, about = "Projection filter experiments: scenario runs, epsilon sweeps, order probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every seed, run the filter roster and the reference, write CSVs.
    Run(Common),
    /// Drift gaps to the ADF over the configured epsilon list.
    SweepEpsilon(Common),
    /// Convergence-order probes on the unit circle.
    ProbeOrders(Common),
    /// Check the configuration without running anything.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    config: PathBuf,
    #[arg(long = "model.epsilon", value_name = "EPS")]
    epsilon: Option<String>,
    #[arg(long = "run.dt", value_name = "DT")]
    dt: Option<String>,
    #[arg(long = "run.horizon", value_name = "T")]
    horizon: Option<String>,
    /// Seed count `n` (seeds 0..n) or a comma-separated list.
    #[arg(long = "run.seeds", value_name = "SEEDS")]
    seeds: Option<String>,
    /// Output directory; overrides the environment and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, Error> {
        let mut c = ScenarioConfig::from_path(&self.config)?;
        for (key, value) in [("model.epsilon", &self.epsilon), ("run.dt", &self.dt), ("run.horizon", &self.horizon), ("run.seeds", &self.seeds)] {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            c.output.dir = PathBuf::from(dir);
        }
        if let Some(dir) = &self.out {
            c.output.dir = dir.clone();
        }
        Ok(c)
    }
}

fn run(c: &ScenarioConfig) -> Result<(), Error> {
    let r = run_scenario(c)?;
    let paths = r.write_csv(&c.output.dir)?;
    let steps = c.steps()?;
    println!("{:<12} {:>14} {:>14} {:>10}", "filter", "mean res_l2", "mean res_hell", "truncated");
    for s in &r.summary.filters {
        let truncated = r.runs.iter().filter(|run| run.series(s.kind).is_some_and(|f| f.is_truncated())).count();
        let fmt = |m| s.mean_residual(m, steps).map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
        println!("{:<12} {:>14} {:>14} {:>10}", s.kind.to_string(), fmt(MetricMode::Direct), fmt(MetricMode::Hellinger), truncated);
    }
    println!("wrote {} files to {}", paths.len(), c.output.dir.display());
    Ok(())
}

fn sweep(c: &ScenarioConfig) -> Result<(), Error> {
    let t = epsilon_sweep(c, &c.sweep.epsilons)?;
    t.write_csv(&c.output.dir)?;
    for kind in ProjectionKind::ALL {
        match t.slope(kind) {
            SweepSlope::Slope(s) => println!("{:<14} slope {s:.4}", kind.name()),
            SweepSlope::ExactMatch => println!("{:<14} exact match", kind.name()),
        }
    }
    println!("wrote epsilon_sweep.csv, epsilon_slopes.csv to {}", c.output.dir.display());
    Ok(())
}

fn probe(c: &ScenarioConfig) -> Result<(), Error> {
    let s = probe_orders(c)?;
    s.write_csv(&c.output.dir)?;
    for r in &s.reports {
        for crit in ProbeCriterion::ALL {
            let t = r.table(crit);
            let slope = if t.is_degenerate() { "degenerate".into() } else { format!("{:.4}", t.slope()?) };
            println!("{:<14} {:<26} slope {slope}", t.kind.name(), crit.name());
        }
    }
    println!("wrote probe_errors.csv, probe_slopes.csv to {}", c.output.dir.display());
    Ok(())
}

fn validate(c: &ScenarioConfig, path: &Path) -> Result<(), Error> {
    c.validate()?;
    c.sweep_epsilons()?;
    c.probe_projections()?;
    let names: Vec<String> = c.filters()?.iter().map(|k| k.to_string()).collect();
    println!(
        "{}: ok ({} steps, {} seeds, {} grid points, filters {})",
        path.display(),
        c.steps()?,
        c.seeds().len(),
        c.grid.points,
        names.join(",")
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run(a) => run(&a.load()?),
        Command::SweepEpsilon(a) => sweep(&a.load()?),
        Command::ProbeOrders(a) => probe(&a.load()?),
        Command::Validate(a) => validate(&a.load()?, &a.config),
    }
}

fn main() -> ExitCode {
    match execute(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}
