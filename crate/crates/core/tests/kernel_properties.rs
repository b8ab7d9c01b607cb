use langevin_core::kernel::{resolvent_numeric, resolvent_series, MemoryKernel};
use proptest::prelude::*;

fn grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn series_resolvent_solves_its_equation(alpha in 0.05..0.45f64, horizon in 0.5..2.0f64) {
        let kernel = MemoryKernel::PowerLaw { alpha };
        let r = resolvent_series(alpha, &grid(horizon, 200), 1e-15).unwrap();
        prop_assert_eq!(r.h[0], 1.0);
        prop_assert!(r.h.windows(2).all(|w| w[1] >= w[0]), "a positive kernel gives an increasing resolvent");
        let residual = r.residual(&kernel).unwrap();
        prop_assert!(residual < 1e-8, "residual {residual:e}");
    }

    #[test]
    fn constant_kernel_scales_like_hyperbolic_cosine(level in 0.1..3.0f64) {
        let g = grid(1.0, 400);
        let r = resolvent_numeric(&MemoryKernel::Constant { level }, &g).unwrap();
        let k = level.sqrt();
        let worst = g.iter().zip(&r.h).map(|(t, h)| (h - (k * t).cosh()).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-6, "max error {worst:e}");
    }
}
