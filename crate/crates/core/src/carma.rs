//! CARMA(p, q) spot models `S(t) = exp(μt + bᵀX(t))` with
//! `dX = (𝛏 + AX) dt + ϑ e_p dW`, the risk premium `ρ = cᵀ(𝛉 + CX)` and
//! the pricing measure under which `X` mean-reverts with `C` towards `𝛏̃`.
//!
//! Transitions of `X` are Gaussian and sampled exactly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::model::TimeGrid;
use crate::dynamics::simulate::Measure;
use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate_adaptive;
use crate::numerics::stats::{monte_carlo, McEstimate};
use crate::numerics::Tolerance;
use crate::rng::{path_rng, PathRng};

const SALT_CARMA: u64 = 0x4341_524d;

/// Companion matrix: ones on the superdiagonal and
/// `(−a_p, …, −a_1)` in the last row.
#[derive(Clone, Debug, PartialEq)]
pub struct CompanionMatrix(DMatrix<f64>);

impl CompanionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Builds the companion matrix of `(a_1, …, a_p)`.
pub fn companion(coeffs: &[f64]) -> Result<CompanionMatrix> {
    let p = coeffs.len();
    if p == 0 {
        return Err(Error::Domain("companion matrix needs at least one coefficient".into()));
    }
    if !(coeffs[p - 1] > 0.0) {
        return Err(Error::Domain(format!("last coefficient must be positive (got {})", coeffs[p - 1])));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("coefficients must be finite".into()));
    }
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p - 1 {
        m[(i, i + 1)] = 1.0;
    }
    for j in 0..p {
        m[(p - 1, j)] = -coeffs[p - 1 - j];
    }
    Ok(CompanionMatrix(m))
}

/// Whether every eigenvalue has negative real part, and the largest real part.
pub fn stationarity_check(a: &CompanionMatrix) -> (bool, f64) {
    let abscissa = a
        .0
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    (abscissa < 0.0, abscissa)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarmaModel {
    /// `α₁ … α_p` of the physical companion matrix `A`.
    pub alphas: Vec<f64>,
    /// Moving-average vector `b = (b₀, …, b_{p−1})`.
    pub b: Vec<f64>,
    /// Premium loading vector; `b` when absent.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    /// `β₁ … β_p` of the premium matrix `C`.
    pub betas: Vec<f64>,
    pub vartheta: f64,
    pub mu: f64,
    /// Mean level `𝛏`.
    pub xi: Vec<f64>,
    /// Premium level `𝛉`.
    pub theta: Vec<f64>,
    pub r: f64,
    /// Initial state; zero when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl CarmaModel {
    pub fn p(&self) -> usize {
        self.alphas.len()
    }

    /// Index `q` of the last non-zero entry of `b`.
    pub fn q(&self) -> usize {
        self.b.iter().rposition(|&v| v != 0.0).unwrap_or(0)
    }

    pub fn c_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.c.as_deref().unwrap_or(&self.b))
    }

    pub fn b_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.b)
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        self.x0.as_deref().map_or_else(|| DVector::zeros(self.p()), DVector::from_column_slice)
    }

    pub fn a_matrix(&self) -> Result<CompanionMatrix> {
        companion(&self.alphas)
    }

    pub fn c_matrix(&self) -> Result<CompanionMatrix> {
        companion(&self.betas)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 {
            return Err(Error::Config("CARMA order p must be at least 1".into()));
        }
        let sizes = [
            ("b", self.b.len()),
            ("betas", self.betas.len()),
            ("xi", self.xi.len()),
            ("theta", self.theta.len()),
            ("c", self.c.as_ref().map_or(p, Vec::len)),
            ("x0", self.x0.as_ref().map_or(p, Vec::len)),
        ];
        for (name, n) in sizes {
            if n != p {
                return Err(Error::Config(format!("{name} has length {n}, expected p = {p}")));
            }
        }
        if self.alphas.iter().any(|&a| !(a >= 0.0)) || !(self.alphas[p - 1] > 0.0) {
            return Err(Error::Config("alphas must be non-negative with α_p > 0".into()));
        }
        if self.betas.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::Config("betas must be positive".into()));
        }
        if self.b[self.q()] != 1.0 {
            return Err(Error::Config(format!(
                "the last non-zero entry of b must equal 1 (b_{} = {})",
                self.q(),
                self.b[self.q()]
            )));
        }
        if !(self.vartheta > 0.0) || !self.vartheta.is_finite() {
            return Err(Error::Config("vartheta must be positive".into()));
        }
        let all = [self.mu, self.r]
            .into_iter()
            .chain(self.b.iter().copied())
            .chain(self.xi.iter().copied())
            .chain(self.theta.iter().copied())
            .chain(self.c.iter().flatten().copied())
            .chain(self.x0.iter().flatten().copied());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("CARMA parameters must be finite".into()));
        }
        Ok(())
    }

    fn require_full_order(&self) -> Result<()> {
        if self.q() + 1 != self.p() {
            return Err(Error::Model(format!(
                "q = {} < p − 1 = {}: the spot has no martingale part and no pricing measure exists",
                self.q(),
                self.p() - 1
            )));
        }
        Ok(())
    }

    fn require_c_equals_b(&self) -> Result<()> {
        if self.c.as_ref().is_some_and(|c| *c != self.b) {
            return Err(Error::Model("this operation needs the premium vector c equal to b".into()));
        }
        Ok(())
    }

    pub fn spot(&self, t: f64, x: &DVector<f64>) -> f64 {
        (self.mu * t + self.b_vector().dot(x)).exp()
    }
}

/// `ρ = cᵀ(𝛉 + C x)`.
pub fn risk_premium(model: &CarmaModel, x: &DVector<f64>) -> Result<f64> {
    let c = model.c_matrix()?;
    let theta = DVector::from_column_slice(&model.theta);
    Ok(model.c_vector().dot(&(theta + c.matrix() * x)))
}

fn theta_constant(model: &CarmaModel) -> f64 {
    let b = model.b_vector();
    let xi = DVector::from_column_slice(&model.xi);
    let theta = DVector::from_column_slice(&model.theta);
    model.mu + 0.5 * model.vartheta * model.vartheta - model.r + b.dot(&xi) - model.c_vector().dot(&theta)
}

/// `θ' = bᵀA − cᵀC` as a row of length `p`.
pub fn theta_loading(model: &CarmaModel) -> Result<DVector<f64>> {
    let a = model.a_matrix()?;
    let c = model.c_matrix()?;
    Ok(a.matrix().tr_mul(&model.b_vector()) - c.matrix().tr_mul(&model.c_vector()))
}

/// Market price of risk `θ(x) = (θ₀ + θ'x) / ϑ`.
pub fn market_price_of_risk(model: &CarmaModel, x: &DVector<f64>) -> Result<f64> {
    model.require_full_order()?;
    Ok((theta_constant(model) + theta_loading(model)?.dot(x)) / model.vartheta)
}

/// Largest entry of `|A − e_p bᵀA + e_p cᵀC − C|`.
pub fn q_drift_identity_residual(model: &CarmaModel) -> Result<f64> {
    let a = model.a_matrix()?.0;
    let c = model.c_matrix()?.0;
    let p = model.p();
    let mut ep = DVector::zeros(p);
    ep[p - 1] = 1.0;
    // Grouped as (A − C) − e_p[bᵀ(A − C) + (b − c)ᵀC] so the rows where A and
    // C agree cancel exactly instead of through large intermediate terms.
    let gap = &a - &c;
    let b = model.b_vector();
    let loading = gap.tr_mul(&b) + c.tr_mul(&(&b - model.c_vector()));
    Ok((gap - &ep * loading.transpose()).abs().max())
}

/// Pricing-measure mean level `𝛏̃ = 𝛏 − e_p(μ + ϑ²/2 − r) + e_p bᵀ(𝛉 − 𝛏)`.
pub fn xi_tilde(model: &CarmaModel) -> DVector<f64> {
    let p = model.p();
    let mut out = DVector::from_column_slice(&model.xi);
    let gap: f64 = model.b.iter().zip(model.theta.iter().zip(&model.xi)).map(|(b, (t, x))| b * (t - x)).sum();
    out[p - 1] += -(model.mu + 0.5 * model.vartheta * model.vartheta - model.r) + gap;
    out
}

/// `θ'_j < α_{p+1−j}` for every column `j`, pairing each entry of `θ'` with
/// the coefficient that sits in the same column of the last row of `A`.
pub fn structure_preserving_check(model: &CarmaModel) -> Result<bool> {
    let loading = theta_loading(model)?;
    let p = model.p();
    Ok((0..p).all(|j| loading[j] < model.alphas[p - 1 - j]))
}

/// Exact one-step law of `dY = (M Y + m) dt + s dW` over a step `Δ`:
/// `Y(t+Δ) = Φ Y(t) + shift + L ε` with `ε` standard normal.
#[derive(Clone, Debug)]
pub struct GaussianTransition {
    pub phi: DMatrix<f64>,
    pub shift: DVector<f64>,
    /// Square-root factor of the step covariance.
    pub factor: DMatrix<f64>,
}

impl GaussianTransition {
    pub fn new(m: &DMatrix<f64>, drift: &DVector<f64>, noise: &DVector<f64>, dt: f64) -> Result<Self> {
        let n = m.nrows();
        // Mean map from exp([[M, m], [0, 0]] Δ).
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(m * dt));
        aug.view_mut((0, n), (n, 1)).copy_from(&(drift * dt));
        let e = aug.exp();
        let phi = e.view((0, 0), (n, n)).into_owned();
        let shift = e.view((0, n), (n, 1)).column(0).into_owned();
        // Covariance from exp([[−M, ssᵀ], [0, Mᵀ]] Δ).
        let mut vl = DMatrix::zeros(2 * n, 2 * n);
        vl.view_mut((0, 0), (n, n)).copy_from(&(-m * dt));
        vl.view_mut((0, n), (n, n)).copy_from(&(noise * noise.transpose() * dt));
        vl.view_mut((n, n), (n, n)).copy_from(&(m.transpose() * dt));
        let f = vl.exp();
        let cov = &phi * f.view((0, n), (n, n));
        let cov = (&cov + cov.transpose()) * 0.5;
        if cov.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("transition matrix exponential is not finite".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self { phi, shift, factor })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    pub fn step(&self, y: &DVector<f64>, rng: &mut PathRng) -> DVector<f64> {
        let eps = DVector::from_fn(y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.phi * y + &self.shift + &self.factor * eps
    }
}

/// Mean-reversion matrix and level of `X` under `measure`.
fn state_dynamics(model: &CarmaModel, measure: Measure) -> Result<(DMatrix<f64>, DVector<f64>)> {
    model.validate()?;
    match measure {
        Measure::Physical => Ok((model.a_matrix()?.0, DVector::from_column_slice(&model.xi))),
        Measure::Pricing => {
            model.require_full_order()?;
            model.require_c_equals_b()?;
            Ok((model.c_matrix()?.0, xi_tilde(model)))
        }
    }
}

fn noise_vector(model: &CarmaModel, dim: usize) -> DVector<f64> {
    let mut s = DVector::zeros(dim);
    s[model.p() - 1] = model.vartheta;
    s
}

/// Sampled states `x[path][k]` on `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarmaPaths {
    pub grid: TimeGrid,
    pub measure: Measure,
    pub x: Vec<Vec<DVector<f64>>>,
}

impl CarmaPaths {
    /// `Y = bᵀX` along each path.
    pub fn observed(&self, model: &CarmaModel) -> Vec<Vec<f64>> {
        let b = model.b_vector();
        self.x.iter().map(|row| row.iter().map(|x| b.dot(x)).collect()).collect()
    }
}

/// Exact simulation of `X` on `grid` starting from `start` (or `x0`).
pub fn simulate_state(
    model: &CarmaModel,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    measure: Measure,
    start: Option<&DVector<f64>>,
) -> Result<CarmaPaths> {
    let (m, level) = state_dynamics(model, measure)?;
    let step = GaussianTransition::new(&m, &level, &noise_vector(model, model.p()), grid.dt())?;
    let x0 = start.cloned().unwrap_or_else(|| model.x0_vector());
    if x0.len() != model.p() {
        return Err(Error::Domain(format!("start state has length {}, expected {}", x0.len(), model.p())));
    }
    let x = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(seed, path, SALT_CARMA);
            let mut row = Vec::with_capacity(grid.steps + 1);
            row.push(x0.clone());
            for _ in 0..grid.steps {
                let next = step.step(row.last().unwrap(), &mut rng);
                row.push(next);
            }
            row
        })
        .collect();
    Ok(CarmaPaths { grid, measure, x })
}

/// `∫₀^∞ (bᵀ e^{As} e_p)² ϑ² ds`, the stationary variance of `Y` under the
/// physical measure.
pub fn stationary_variance(model: &CarmaModel) -> Result<f64> {
    model.validate()?;
    let a = model.a_matrix()?;
    let (stable, abscissa) = stationarity_check(&a);
    if !stable {
        return Err(Error::Model(format!("A is not stable (spectral abscissa {abscissa})")));
    }
    let b = model.b_vector();
    let p = model.p();
    let kernel = |s: f64| {
        let col = (a.matrix() * s).exp().column(p - 1).into_owned();
        b.dot(&col).powi(2)
    };
    let tail = 40.0 / abscissa.abs();
    let v = integrate_adaptive(kernel, 0.0, tail, Tolerance::new(1e-15, 1e-12))?.value;
    Ok(model.vartheta * model.vartheta * v)
}

/// `F(t, T)` in closed form from the state `x` at `t`.
pub fn carma_forward_price(model: &CarmaModel, t: f64, maturity: f64, x: &DVector<f64>) -> Result<f64> {
    model.validate()?;
    model.require_full_order()?;
    model.require_c_equals_b()?;
    if t > maturity {
        return Err(Error::Domain(format!("need t ≤ T (got {t} > {maturity})")));
    }
    let c = model.c_matrix()?;
    let (stable, abscissa) = stationarity_check(&c);
    if !stable {
        return Err(Error::Model(format!("C is not stable (spectral abscissa {abscissa})")));
    }
    let c_inv = c
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("C is singular".into()))?;
    let b = model.b_vector();
    let p = model.p();
    let tau = maturity - t;
    let e = (c.matrix() * tau).exp();
    let identity = DMatrix::<f64>::identity(p, p);
    let mean = b.dot(&(&e * x)) + b.dot(&((&e - identity) * &c_inv * xi_tilde(model)));
    let var = if tau > 0.0 {
        integrate_adaptive(
            |s: f64| b.dot(&(c.matrix() * s).exp().column(p - 1).into_owned()).powi(2),
            0.0,
            tau,
            Tolerance::new(1e-15, 1e-13),
        )?
        .value
    } else {
        0.0
    };
    Ok((model.mu * maturity + mean + 0.5 * model.vartheta * model.vartheta * var).exp())
}

/// Forward curve `(T, F(t, T))` over `maturities`.
pub fn forward_curve(model: &CarmaModel, t: f64, x: &DVector<f64>, maturities: &[f64]) -> Result<Vec<(f64, f64)>> {
    maturities
        .par_iter()
        .map(|&big_t| carma_forward_price(model, t, big_t, x).map(|f| (big_t, f)))
        .collect()
}

/// Monte Carlo `E[S(T) | X(t) = x]` under the pricing measure, one exact step.
pub fn mc_forward(
    model: &CarmaModel,
    t: f64,
    maturity: f64,
    x: &DVector<f64>,
    n_paths: u64,
    seed: u64,
) -> Result<McEstimate> {
    if !(maturity > t) {
        return Err(Error::Domain("Monte Carlo forward needs T > t".into()));
    }
    let (m, level) = state_dynamics(model, Measure::Pricing)?;
    let step = GaussianTransition::new(&m, &level, &noise_vector(model, model.p()), maturity - t)?;
    Ok(monte_carlo(n_paths, 1, |path, out| {
        let mut rng = path_rng(seed, path, SALT_CARMA);
        out[0] = model.spot(maturity, &step.step(x, &mut rng));
    })
    .remove(0))
}

/// Monte Carlo `E[e^{−rT − ∫₀ᵀ ρ} S(T)] / S(0)` under the pricing measure,
/// stepping `(X, ∫X)` jointly and exactly on `grid`.
pub fn deflated_spot_ratio(model: &CarmaModel, grid: TimeGrid, n_paths: u64, seed: u64) -> Result<McEstimate> {
    let (m, level) = state_dynamics(model, Measure::Pricing)?;
    let p = model.p();
    let mut big = DMatrix::zeros(2 * p, 2 * p);
    big.view_mut((0, 0), (p, p)).copy_from(&m);
    big.view_mut((p, 0), (p, p)).copy_from(&DMatrix::identity(p, p));
    let mut drift = DVector::zeros(2 * p);
    drift.rows_mut(0, p).copy_from(&level);
    let step = GaussianTransition::new(&big, &drift, &noise_vector(model, 2 * p), grid.dt())?;
    let c = model.c_matrix()?.0;
    let b = model.b_vector();
    let bc = c.tr_mul(&b);
    let theta_part = b.dot(&DVector::from_column_slice(&model.theta));
    let x0 = model.x0_vector();
    let s0 = model.spot(0.0, &x0);
    let horizon = grid.horizon;
    let mut start = DVector::zeros(2 * p);
    start.rows_mut(0, p).copy_from(&x0);
    Ok(monte_carlo(n_paths, 1, |path, out| {
        let mut rng = path_rng(seed, path, SALT_CARMA ^ 0xd5);
        let mut y = start.clone();
        for _ in 0..grid.steps {
            y = step.step(&y, &mut rng);
        }
        let x = y.rows(0, p).into_owned();
        let premium = theta_part * horizon + bc.dot(&y.rows(p, p));
        out[0] = (-model.r * horizon - premium).exp() * model.spot(horizon, &x) / s0;
    })
    .remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::Moments;
    use approx::assert_abs_diff_eq;

    fn carma21() -> CarmaModel {
        CarmaModel {
            alphas: vec![3.0, 2.0],
            b: vec![0.5, 1.0],
            c: None,
            betas: vec![2.5, 1.5],
            vartheta: 0.3,
            mu: 0.05,
            xi: vec![0.0, 0.1],
            theta: vec![0.02, -0.04],
            r: 0.03,
            x0: Some(vec![0.1, -0.2]),
        }
    }

    #[test]
    fn companion_layout() {
        assert_eq!(companion(&[2.0]).unwrap().matrix(), &DMatrix::from_element(1, 1, -2.0));
        let a = companion(&[3.0, 2.0]).unwrap();
        assert_eq!(a.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        let a3 = companion(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            a3.matrix(),
            &DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -3.0, -2.0, -1.0])
        );
        assert!(companion(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn stationarity() {
        let (ok, abscissa) = stationarity_check(&companion(&[3.0, 2.0]).unwrap());
        assert!(ok);
        assert_abs_diff_eq!(abscissa, -1.0, epsilon = 1e-12);
        let (ok, abscissa) = stationarity_check(&companion(&[0.0, 1.0]).unwrap());
        assert!(!ok);
        assert_abs_diff_eq!(abscissa, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn premium_and_price_of_risk() {
        let mut m = carma21();
        let zero = DVector::zeros(2);
        m.theta = vec![0.0, 0.0];
        assert_eq!(risk_premium(&m, &zero).unwrap(), 0.0);
        let m = carma21();
        let x = DVector::from_vec(vec![0.3, -0.1]);
        // c = b = (0.5, 1), C = [[0, 1], [−1.5, −2.5]].
        let cx = [-0.1, -1.5 * 0.3 + 2.5 * 0.1];
        let want = 0.5 * (0.02 + cx[0]) + (-0.04 + cx[1]);
        assert_abs_diff_eq!(risk_premium(&m, &x).unwrap(), want, epsilon = 1e-15);
        // θ' = bᵀA − bᵀC = (−2 + 1.5, 0.5 − 3 − 0.5 + 2.5).
        let loading = theta_loading(&m).unwrap();
        assert_abs_diff_eq!(loading[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(loading[1], -0.5, epsilon = 1e-15);
        let konst = 0.05 + 0.045 - 0.03 + 0.1 - (0.01 - 0.04);
        let want = (konst - 0.5 * 0.3 + 0.5 * 0.1) / 0.3;
        assert_abs_diff_eq!(market_price_of_risk(&m, &x).unwrap(), want, epsilon = 1e-14);
    }

    #[test]
    fn identical_matrices_remove_state_dependence() {
        let mut m = carma21();
        m.betas = m.alphas.clone();
        let a = market_price_of_risk(&m, &DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let b = market_price_of_risk(&m, &DVector::zeros(2)).unwrap();
        assert_eq!(a, b);
        assert!(structure_preserving_check(&m).unwrap());
    }

    #[test]
    fn lower_order_has_no_price_of_risk() {
        let mut m = carma21();
        m.b = vec![1.0, 0.0];
        assert!(matches!(market_price_of_risk(&m, &DVector::zeros(2)), Err(Error::Model(_))));
    }

    #[test]
    fn drift_identity() {
        assert!(q_drift_identity_residual(&carma21()).unwrap() <= 1e-14);
        let mut m = carma21();
        m.c = Some(vec![0.2, 1.0]);
        assert!(q_drift_identity_residual(&m).unwrap() > 1e-3);
    }

    #[test]
    fn xi_tilde_changes_only_the_last_coordinate() {
        let m = carma21();
        let xt = xi_tilde(&m);
        assert_eq!(xt[0], m.xi[0]);
        let want = 0.1 - (0.05 + 0.045 - 0.03) + (0.5 * 0.02 + (-0.04 - 0.1));
        assert_abs_diff_eq!(xt[1], want, epsilon = 1e-15);
        let mut n = m.clone();
        n.theta = n.xi.clone();
        n.mu = n.r - 0.5 * n.vartheta * n.vartheta;
        assert_abs_diff_eq!((xi_tilde(&n) - DVector::from_column_slice(&n.xi)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn structure_check_detects_violation() {
        let mut m = carma21();
        m.betas = vec![7.0, 1.5];
        // θ'₂ = 0.5 − 3 − 0.5 + 7 = 4 ≥ α₁ = 3.
        assert!(!structure_preserving_check(&m).unwrap());
    }

    #[test]
    fn matrix_exponential_matches_eigendecomposition() {
        let c = companion(&[3.0, 2.0]).unwrap();
        // Eigenvalues −1, −2 with eigenvectors (1, −1), (1, −2).
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -2.0]);
        let tau: f64 = 0.7;
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![(-tau).exp(), (-2.0 * tau).exp()]));
        let want = &v * d * v.clone().try_inverse().unwrap();
        assert!(((c.matrix() * tau).exp() - want).abs().max() < 1e-12);
    }

    #[test]
    fn transition_of_scalar_ou() {
        let (k, m, s, dt): (f64, f64, f64, f64) = (2.0, 0.3, 0.5, 0.4);
        let tr = GaussianTransition::new(
            &DMatrix::from_element(1, 1, -k),
            &DVector::from_element(1, m),
            &DVector::from_element(1, s),
            dt,
        )
        .unwrap();
        let e = (-k * dt).exp();
        assert_abs_diff_eq!(tr.phi[(0, 0)], e, epsilon = 1e-14);
        assert_abs_diff_eq!(tr.shift[0], m / k * (1.0 - e), epsilon = 1e-14);
        assert_abs_diff_eq!(tr.covariance()[(0, 0)], s * s / (2.0 * k) * (1.0 - e * e), epsilon = 1e-14);
    }

    #[test]
    fn forward_at_maturity_is_spot() {
        let m = carma21();
        let x = DVector::from_vec(vec![0.2, 0.1]);
        let f = carma_forward_price(&m, 1.5, 1.5, &x).unwrap();
        assert_abs_diff_eq!(f, m.spot(1.5, &x), epsilon = 1e-15);
    }

    #[test]
    fn scalar_forward_is_ou_lognormal() {
        let m = CarmaModel {
            alphas: vec![1.2],
            b: vec![1.0],
            c: None,
            betas: vec![0.8],
            vartheta: 0.25,
            mu: 0.02,
            xi: vec![0.05],
            theta: vec![0.01],
            r: 0.03,
            x0: None,
        };
        let (t, big_t, x) = (0.5, 2.0, 0.3);
        let beta: f64 = 0.8;
        let xt = 0.05 - (0.02 + 0.03125 - 0.03) + (0.01 - 0.05);
        let tau = big_t - t;
        let e = (-beta * tau).exp();
        let want = (0.02 * big_t + e * x + (1.0 - e) * xt / beta
            + 0.0625 / (4.0 * beta) * (1.0 - (-2.0 * beta * tau).exp()))
        .exp();
        let got = carma_forward_price(&m, t, big_t, &DVector::from_element(1, x)).unwrap();
        assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn zero_level_from_origin_has_zero_mean() {
        let mut m = carma21();
        m.xi = vec![0.0, 0.0];
        m.x0 = None;
        let paths = simulate_state(&m, TimeGrid::new(2.0, 8).unwrap(), 20_000, 3, Measure::Physical, None).unwrap();
        for coord in 0..2 {
            let mut mom = Moments::default();
            paths.x.iter().for_each(|row| mom.push(row[8][coord]));
            assert!(mom.estimate().within(0.0, 4.0), "{:?}", mom.estimate());
        }
    }

    #[test]
    fn pricing_simulation_requires_c_equal_b() {
        let mut m = carma21();
        m.c = Some(vec![0.1, 1.0]);
        assert!(simulate_state(&m, TimeGrid::new(1.0, 4).unwrap(), 1, 1, Measure::Pricing, None).is_err());
        assert!(simulate_state(&m, TimeGrid::new(1.0, 4).unwrap(), 1, 1, Measure::Physical, None).is_ok());
    }

    #[test]
    fn forward_matches_monte_carlo() {
        let m = carma21();
        let x = m.x0_vector();
        let f = carma_forward_price(&m, 0.0, 1.0, &x).unwrap();
        let est = mc_forward(&m, 0.0, 1.0, &x, 100_000, 5).unwrap();
        assert!(est.in_ci99(f), "{est:?} vs {f}");
    }

    #[test]
    fn deflated_spot_is_a_martingale() {
        let est = deflated_spot_ratio(&carma21(), TimeGrid::new(1.0, 10).unwrap(), 50_000, 9).unwrap();
        assert!(est.within(1.0, 4.0), "{est:?}");
    }
}
