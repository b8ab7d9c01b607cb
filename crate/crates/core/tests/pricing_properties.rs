use langevin_core::dynamics::{LevyModel, VolProcess};
use langevin_core::pricing_lss::{
    cal_a, forward_price, payoff_transform, spot_option_price, LssPricingParams, LssSpec, OptionKind, OptionSpec,
};
use proptest::prelude::*;

fn diffusive(rate: f64, c: f64, b_bar: f64, a_bar: f64, rho: f64, v: f64) -> LssPricingParams {
    LssPricingParams::new(LssSpec {
        rate: rate.into(),
        chi: VolProcess::constant(1.0, 0.5, 2.0),
        levy: LevyModel { varsigma: 0.0, c, jumps: None },
        a_bar: a_bar.into(),
        b_bar: b_bar.into(),
        b2_bar: 0.1.into(),
        v,
        rho,
        horizon: 2.0,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn payoff_transform_is_conjugate_symmetric(
        lambda in -50.0..50.0f64,
        omega in prop_oneof![1.1..4.0f64, -3.0..-0.1f64],
        strike in 0.2..5.0f64,
    ) {
        let plus = payoff_transform(lambda, omega, strike).unwrap();
        let minus = payoff_transform(-lambda, omega, strike).unwrap();
        prop_assert!((plus.conj() - minus).norm() <= 1e-15 * plus.norm());
    }

    #[test]
    fn forward_correction_vanishes_on_the_diagonal(t in 0.0..2.0f64, b_bar in -0.5..0.5f64) {
        let p = diffusive(0.03, 0.3, b_bar, 0.01, 0.02, 0.1);
        prop_assert_eq!(cal_a(&p, t, t).unwrap(), 0.0);
        prop_assert_eq!(forward_price(&p, t, t).unwrap().price, p.spot());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn put_call_parity_holds_for_diffusive_models(
        rate in 0.0..0.06f64,
        c in 0.1..0.5f64,
        b_bar in -0.5..0.5f64,
        a_bar in -0.02..0.02f64,
        rho in -0.03..0.05f64,
        moneyness in 0.7..1.4f64,
        maturity in 0.25..1.5f64,
    ) {
        let p = diffusive(rate, c, b_bar, a_bar, rho, 0.05);
        let strike = moneyness * p.spot();
        let call = spot_option_price(&p, &OptionSpec::new(OptionKind::Call, strike, maturity), 0.0).unwrap().price;
        let put = spot_option_price(&p, &OptionSpec::new(OptionKind::Put, strike, maturity), 0.0).unwrap().price;
        let fwd = forward_price(&p, 0.0, maturity).unwrap().price;
        let discount = (-rate * maturity).exp();
        let gap = (call - put - discount * (fwd - strike)).abs() / fwd;
        prop_assert!(gap < 1e-8, "parity gap {gap:e}");
        prop_assert!(call >= (discount * (fwd - strike)).max(0.0) - 1e-12);
    }
}
