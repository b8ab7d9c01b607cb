use langevin_core::carma::{carma_forward_price, q_drift_identity_residual, stationarity_check, CarmaModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Coefficients `(a₁, …, a_p)` of `∏ (s + rₖ)`, so the companion matrix has
/// eigenvalues `−rₖ`.
fn coefficients(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, &a) in c.iter().enumerate() {
            next[k] += a;
            next[k + 1] += a * r;
        }
        c = next;
    }
    c[1..].to_vec()
}

fn spread(raw: Vec<f64>) -> Vec<f64> {
    // Distinct roots at least 0.25 apart keep the Vandermonde oracle well conditioned.
    let mut sorted = raw;
    sorted.sort_by(f64::total_cmp);
    sorted.iter().enumerate().map(|(i, r)| r + 0.25 * i as f64).collect()
}

fn model(alpha_roots: &[f64], beta_roots: &[f64], b: Vec<f64>, theta: Vec<f64>, x0: Vec<f64>) -> CarmaModel {
    let p = alpha_roots.len();
    let mut b = b;
    b[p - 1] = 1.0;
    CarmaModel {
        alphas: coefficients(alpha_roots),
        b,
        c: None,
        betas: coefficients(beta_roots),
        vartheta: 0.3,
        mu: 0.02,
        xi: vec![0.05; p],
        theta,
        r: 0.03,
        x0: Some(x0),
    }
}

fn arb_model() -> impl Strategy<Value = CarmaModel> {
    (2usize..=6).prop_flat_map(|p| {
        (
            prop::collection::vec(0.3..1.2f64, p),
            prop::collection::vec(0.3..1.2f64, p),
            prop::collection::vec(-1.0..1.0f64, p),
            prop::collection::vec(-0.1..0.1f64, p),
            prop::collection::vec(-0.3..0.3f64, p),
        )
            .prop_map(|(a, c, b, theta, x0)| model(&spread(a), &spread(c), b, theta, x0))
    })
}

/// Forward price from the eigen-decomposition of the pricing companion
/// matrix: with eigenvalues `λₖ` and Vandermonde eigenvectors every matrix
/// exponential and covariance integral is a finite sum of exponentials.
fn eigen_forward(m: &CarmaModel, t: f64, big_t: f64, x: &DVector<f64>) -> f64 {
    let p = m.p();
    let mut lambdas = vec![0.0; p];
    // Recover eigenvalues as negated roots from the construction above.
    let roots = eigen_roots(&m.betas);
    lambdas.iter_mut().zip(&roots).for_each(|(l, r)| *l = -r);
    let v = DMatrix::from_fn(p, p, |i, j| lambdas[j].powi(i as i32));
    let v_inv = v.clone().try_inverse().unwrap();
    let b = DVector::from_column_slice(&m.b);
    let tau = big_t - t;
    let diag = |f: &dyn Fn(f64) -> f64| DMatrix::from_diagonal(&DVector::from_iterator(p, lambdas.iter().map(|&l| f(l))));
    let expo = &v * diag(&|l| (l * tau).exp()) * &v_inv;
    let integral = &v * diag(&|l| (l * tau).exp_m1() / l) * &v_inv;
    let mut level = DVector::from_column_slice(&m.xi);
    let gap: f64 = (0..p).map(|i| m.b[i] * (m.theta[i] - m.xi[i])).sum();
    level[p - 1] += -(m.mu + 0.5 * m.vartheta * m.vartheta - m.r) + gap;
    let mean = b.dot(&(&expo * x)) + b.dot(&(&integral * level));
    let left = v.tr_mul(&b);
    let right = v_inv.column(p - 1).into_owned();
    let w: Vec<f64> = (0..p).map(|k| left[k] * right[k]).collect();
    let mut var = 0.0;
    for j in 0..p {
        for k in 0..p {
            let s = lambdas[j] + lambdas[k];
            var += w[j] * w[k] * (s * tau).exp_m1() / s;
        }
    }
    var *= m.vartheta * m.vartheta;
    (m.mu * big_t + mean + 0.5 * var).exp()
}

/// Roots `rₖ` of `∏(s + rₖ)` from its coefficients, by Newton iteration on
/// the companion polynomial seeded at the real axis.
fn eigen_roots(coeffs: &[f64]) -> Vec<f64> {
    let p = coeffs.len();
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i + 1 == j {
            1.0
        } else if i == p - 1 {
            -coeffs[p - 1 - j]
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = companion.complex_eigenvalues().iter().map(|z| -z.re).collect();
    let poly = |s: f64| coeffs.iter().fold(1.0, |acc, &a| acc * s + a);
    let dpoly = |s: f64| {
        let h = 1e-7;
        (poly(s + h) - poly(s - h)) / (2.0 * h)
    };
    for r in roots.iter_mut() {
        let mut s = -*r;
        for _ in 0..5 {
            let d = dpoly(s);
            if d != 0.0 {
                s -= poly(s) / d;
            }
        }
        *r = -s;
    }
    roots
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pricing_drift_identity_holds(m in arb_model()) {
        let residual = q_drift_identity_residual(&m).unwrap();
        prop_assert!(residual <= 1e-14, "residual {residual:e}");
    }

    #[test]
    fn constructed_models_are_stationary(m in arb_model()) {
        let (stable, abscissa) = stationarity_check(&m.a_matrix().unwrap());
        prop_assert!(stable && abscissa < 0.0);
    }

    #[test]
    fn forward_at_maturity_is_the_spot(m in arb_model(), t in 0.0..3.0f64) {
        let x = m.x0_vector();
        let f = carma_forward_price(&m, t, t, &x).unwrap();
        let s = m.spot(t, &x);
        prop_assert!((f - s).abs() <= 1e-14 * s, "{f} vs {s}");
    }

    #[test]
    fn forward_matches_eigen_decomposition(m in arb_model(), t in 0.0..1.0f64, tau in 0.05..3.0f64) {
        let x = m.x0_vector();
        let f = carma_forward_price(&m, t, t + tau, &x).unwrap();
        let oracle = eigen_forward(&m, t, t + tau, &x);
        prop_assert!(((f - oracle) / oracle).abs() < 1e-10, "{f} vs {oracle}");
    }
}
