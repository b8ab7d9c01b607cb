//! Scalar special functions shared by the model and pricing code.


/// `x / (e^x − 1)`, equal to 1 at the origin.
///
/// This is the density of the pricing-measure jump compensator relative to
/// the physical one.
pub fn tilt(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    } else if x > 700.0 {
        x * (-x).exp()
    } else {
        x / x.exp_m1()
    }
}

/// `1 − x / (e^x − 1)`: the jump reweighting of the measure change.
///
/// Always below 1, and satisfies `|zeta(x)| ≤ |x|`.
pub fn zeta(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * (0.5 + x * (-1.0 / 12.0 + x2 * (1.0 / 720.0 + x2 * (-1.0 / 30240.0 + x2 / 1209600.0))))
    } else {
        1.0 - tilt(x)
    }
}

/// `ln(x / (e^x − 1)) = −x/2 − ln(sinh(x/2) / (x/2))`, stable for large `|x|`.
pub fn ln_tilt(x: f64) -> f64 {
    let y = 0.5 * x.abs();
    let ln_sinhc = if y < 1e-4 {
        y * y / 6.0
    } else if y > 20.0 {
        y - std::f64::consts::LN_2 - y.ln() + (-(-2.0 * y).exp()).ln_1p()
    } else {
        (y.sinh() / y).ln()
    };
    -0.5 * x - ln_sinhc
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_and_zeta_are_complementary() {
        for &x in &[-40.0, -3.0, -0.5, -0.09, -1e-8, 0.0, 1e-8, 0.05, 0.2, 1.0, 5.0, 60.0] {
            assert!((tilt(x) + zeta(x) - 1.0).abs() < 1e-14, "x={x}");
        }
        assert!((zeta(1.0) - (1.0 - 1.0 / (std::f64::consts::E - 1.0))).abs() < 1e-15);
    }

    #[test]
    fn zeta_series_matches_direct_formula_at_switch() {
        for &x in &[0.099f64, -0.099, 0.0999999] {
            let direct = 1.0 - x / x.exp_m1();
            assert!((zeta(x) - direct).abs() < 1e-15, "x={x}");
        }
    }

    #[test]
    fn ln_tilt_matches_log_of_tilt() {
        for &x in &[-50.0, -5.0, -0.3, 1e-6, 0.3, 5.0, 50.0, 300.0] {
            assert!((ln_tilt(x) - tilt(x).ln()).abs() < 1e-12 * (1.0 + x.abs()), "x={x}");
        }
    }

    #[test]
    fn normal_cdf_symmetry_and_tails() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.3) + norm_cdf(-1.3) - 1.0).abs() < 1e-15);
        assert!(norm_cdf(-30.0) > 0.0);
    }
}
