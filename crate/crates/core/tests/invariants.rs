use nalgebra::DVector;
use proptest::prelude::*;

use projfilter_core::experiment::scenario::{increments_sha256, simulate_observations};
use projfilter_core::experiment::{run_seed, ScenarioConfig, Seeds};
use projfilter_core::filter::{run_filter, KalmanFilter};
use projfilter_core::reference::{GridDensity, ReferenceSolver};
use projfilter_core::{Filter, FilterKind, FilterModel, GaussianFamily, Grid, MetricMode, ProjectionKind};

fn theta(m: f64, s: f64) -> DVector<f64> {
    GaussianFamily::theta(m, s)
}

#[test]
fn zero_epsilon_trajectories_agree_relatively() {
    let model = FilterModel::cubic_sensor(0.0);
    let (_, dys) = simulate_observations(&model, (0.0, 1.0), 1e-3, 1000, 11).unwrap();
    let k = run_filter(&KalmanFilter::new(model.clone()), &theta(0.0, 1.0), 1e-3, &dys);
    for kind in FilterKind::ALL {
        let tr = run_filter(kind.build(&model).as_ref(), &theta(0.0, 1.0), 1e-3, &dys);
        assert!(tr.is_complete(), "{kind}");
        for (a, b) in tr.states.iter().zip(&k.states) {
            let rel = (a - b).amax() / b.amax().max(1.0);
            assert!(rel < 1e-6, "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn cubic_sensor_steps_keep_positive_sd() {
    let model = FilterModel::cubic_sensor(0.05);
    let filters: Vec<Box<dyn Filter>> = FilterKind::ALL.iter().map(|k| k.build(&model)).collect();
    let mut violations = 0;
    for seed in 0..100 {
        let (_, dys) = simulate_observations(&model, (0.0, 1.0), 1e-3, 1000, seed).unwrap();
        for f in &filters {
            let mut th = theta(0.0, 1.0);
            for dy in &dys {
                match f.raw_step(&th, 1e-3, *dy) {
                    Ok(next) if next[1] > 0.0 => th = next,
                    _ => {
                        violations += 1;
                        break;
                    }
                }
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn reference_mass_and_positivity_on_the_cubic_sensor() {
    let model = FilterModel::cubic_sensor(0.05);
    let grid = Grid::new(400, 8.0).unwrap();
    let solver = ReferenceSolver::new(&model, grid.clone()).unwrap();
    let (_, dys) = simulate_observations(&model, (0.0, 1.0), 1e-3, 1000, 3).unwrap();
    let mut p = GridDensity::gaussian(grid.clone(), 0.0, 1.0).unwrap();
    for dy in &dys {
        let predicted = solver.fokker_planck(p.values(), 1e-3);
        assert!((grid.integrate(&predicted) - 1.0).abs() < 1e-4);
        p = solver.step_unchecked(&p, 1e-3, *dy).unwrap();
        assert!(p.values().iter().all(|v| *v >= 0.0));
        assert!((p.mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn csv_header_checksum_is_the_shared_increment_stream() {
    let mut c = ScenarioConfig::default();
    c.run.horizon = 0.05;
    c.run.seeds = Seeds::List(vec![4]);
    c.grid.points = 150;
    let r = run_seed(&c, 4).unwrap();
    let (_, dys) = simulate_observations(&c.model().unwrap(), (0.0, 1.0), c.run.dt, 50, 4).unwrap();
    assert_eq!(dys, r.increments);
    let sha = increments_sha256(&dys);
    assert!(r.to_csv().starts_with(&format!("# seed=4, dy_sha256={sha}\n")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_sensor_coefficients_are_kalman(m in -3.0f64..3.0, s in 0.2f64..3.0) {
        let model = FilterModel::cubic_sensor(0.0);
        let (ak, bk) = KalmanFilter::new(model.clone()).coefficients(&theta(m, s)).unwrap();
        for kind in FilterKind::ALL {
            let (a, b) = kind.build(&model).coefficients(&theta(m, s)).unwrap();
            prop_assert!((&a - &ak).amax() < 1e-6 * ak.amax().max(1.0), "{} A {} vs {}", kind, a, ak);
            prop_assert!((&b - &bk).amax() < 1e-10, "{} B {} vs {}", kind, b, bk);
        }
    }

    #[test]
    fn projection_diffusions_are_bitwise_identical(m in -3.0f64..3.0, s in 0.2f64..3.0, eps in 0.0f64..0.2) {
        let model = FilterModel::cubic_sensor(eps);
        for mode in MetricMode::ALL {
            let bs: Vec<DVector<f64>> = ProjectionKind::ALL
                .iter()
                .map(|&p| FilterKind::projection(p, mode).build(&model).coefficients(&theta(m, s)).unwrap().1)
                .collect();
            prop_assert_eq!(&bs[0], &bs[1]);
            prop_assert_eq!(&bs[0], &bs[2]);
        }
    }
}
