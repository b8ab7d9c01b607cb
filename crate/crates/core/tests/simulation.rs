use langevin_core::dynamics::measure::simulate_under_q;
use langevin_core::dynamics::simulate::simulate_physical;
use langevin_core::dynamics::MarketSpec;
use langevin_core::dynamics::{MarketModel, TimeGrid};

fn model() -> MarketModel {
    let spec: MarketSpec = serde_json::from_str(
        r#"{
            "kernel": { "type": "power_law", "alpha": 0.25 },
            "levy": { "c": 0.3, "jumps": { "intensity": 2.0, "law": { "type": "normal", "mean": -0.05, "std": 0.1 } } },
            "chi": { "level": 1.0, "lower": 0.5, "upper": 2.0 },
            "rate": { "a": 0.02, "b1": 0.1, "b2": 0.5 },
            "premium": { "a_bar": 0.01, "b1_bar": 0.5, "b2_bar": 0.1, "b3_bar": 0.5 },
            "r0": 0.03, "rho0": 0.02, "horizon": 1.0
        }"#,
    )
    .unwrap();
    MarketModel::from_spec(spec, 200).unwrap()
}

#[test]
fn paths_do_not_depend_on_the_thread_count() {
    let m = model();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| simulate_physical(&m, grid, 700, 11).unwrap());
    let parallel = simulate_physical(&m, grid, 700, 11).unwrap();
    assert_eq!(serial.spot, parallel.spot);
    assert_eq!(serial.z, parallel.z);
    let serial = pool.install(|| simulate_under_q(&m, grid, 300, 11).unwrap());
    let parallel = simulate_under_q(&m, grid, 300, 11).unwrap();
    assert_eq!(serial.spot, parallel.spot);
}

#[test]
fn path_prefixes_do_not_depend_on_the_batch_size() {
    let m = model();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let small = simulate_physical(&m, grid, 10, 4).unwrap();
    let large = simulate_physical(&m, grid, 40, 4).unwrap();
    assert_eq!(small.xi[..], large.xi[..10]);
}

#[test]
fn seeds_give_different_paths() {
    let m = model();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let a = simulate_physical(&m, grid, 5, 1).unwrap();
    let b = simulate_physical(&m, grid, 5, 2).unwrap();
    assert_ne!(a.xi, b.xi);
    assert!(a.spot.iter().flatten().all(|s| s.is_finite() && *s > 0.0));
}
