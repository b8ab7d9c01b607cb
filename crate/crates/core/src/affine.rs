//! Riccati equations of time-inhomogeneous affine jump-diffusions.
//!
//! For `dX = (ϖ + Σ xᵢβᵢ) dt + σ dW + ∫ ι (μ − ν)` with `σσᵀ = ϱ + Σ xᵢαᵢ`
//! and discount rate `R = c + γᵀX`, the discounted transform
//! `E[e^{−∫R} e^{uᵀX(T)} | F_t]` equals `exp(φ(t) + ψ(t)ᵀX(t))` where `(φ, ψ)`
//! solve backward Riccati equations with `φ(T) = 0`, `ψ(T) = u`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::levy::JumpIntegrator;
use crate::error::{Error, Result};
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::numerics::quadrature::integrate_piecewise;
use crate::numerics::special::tilt;
use crate::numerics::Tolerance;
use crate::pricing_lss::LssPricingParams;

pub type TimeFn<T> = Arc<dyn Fn(f64) -> T + Send + Sync>;

/// Jumps of the form `ι(t, z) = z · direction(t)` with compensator
/// `weight(t, z) ℓ(dz) dt` for a base Lévy measure `ℓ`.
#[derive(Clone)]
pub struct AffineJumps {
    pub integrator: Arc<JumpIntegrator>,
    pub direction: TimeFn<DVector<f64>>,
    pub weight: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

#[derive(Clone)]
pub struct AffineModelSpec {
    pub dim: usize,
    /// `ϖ(t)`.
    pub drift: TimeFn<DVector<f64>>,
    /// Column `i` is `βᵢ(t)`.
    pub drift_state: TimeFn<DMatrix<f64>>,
    /// `ϱ(t)`.
    pub diffusion: TimeFn<DMatrix<f64>>,
    /// `αᵢ(t)`, empty when the diffusion does not depend on the state.
    pub diffusion_state: Vec<TimeFn<DMatrix<f64>>>,
    pub jumps: Option<AffineJumps>,
    /// `c(t)`.
    pub discount: TimeFn<f64>,
    /// `γ(t)`.
    pub discount_state: TimeFn<DVector<f64>>,
    /// Times where some coefficient may jump; the ODE is restarted there.
    pub breakpoints: Vec<f64>,
}

impl std::fmt::Debug for AffineModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineModelSpec")
            .field("dim", &self.dim)
            .field("jumps", &self.jumps.is_some())
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl AffineModelSpec {
    /// Constant-coefficient diffusion without jumps or discounting.
    pub fn gaussian(drift: DVector<f64>, drift_state: DMatrix<f64>, diffusion: DMatrix<f64>) -> Self {
        let dim = drift.len();
        Self {
            dim,
            drift: Arc::new(move |_| drift.clone()),
            drift_state: Arc::new(move |_| drift_state.clone()),
            diffusion: Arc::new(move |_| diffusion.clone()),
            diffusion_state: Vec::new(),
            jumps: None,
            discount: Arc::new(|_| 0.0),
            discount_state: Arc::new(move |_| DVector::zeros(dim)),
            breakpoints: Vec::new(),
        }
    }

    /// Checks shapes and symmetry/semidefiniteness of `ϱ` and symmetry of
    /// `αᵢ` at `samples` points of `[t, T]`.
    pub fn validate(&self, t: f64, horizon: f64, samples: usize) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::Config("affine model needs dimension ≥ 1".into()));
        }
        if !self.diffusion_state.is_empty() && self.diffusion_state.len() != d {
            return Err(Error::Config(format!("expected {d} state diffusion matrices")));
        }
        for k in 0..samples.max(1) {
            let s = t + (horizon - t) * k as f64 / samples.max(2).saturating_sub(1) as f64;
            let rho = (self.diffusion)(s);
            let b = (self.drift_state)(s);
            if (self.drift)(s).len() != d || b.shape() != (d, d) || rho.shape() != (d, d) {
                return Err(Error::Config(format!("coefficient shapes disagree with dimension {d}")));
            }
            let scale = rho.amax().max(1.0);
            if (&rho - rho.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Model(format!("diffusion matrix is not symmetric at t = {s}")));
            }
            let min_eig = rho.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-10 * scale {
                return Err(Error::Model(format!(
                    "diffusion matrix is not positive semidefinite at t = {s} (eigenvalue {min_eig:.3e})"
                )));
            }
            for a in &self.diffusion_state {
                let a = a(s);
                if a.shape() != (d, d) || (&a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
                    return Err(Error::Model(format!("state diffusion matrix malformed at t = {s}")));
                }
            }
        }
        Ok(())
    }

    /// `∫ (e^{ψᵀι} − 1 − ψᵀι) ℓ_t(dz)`.
    pub fn jump_term(&self, t: f64, psi: &[Complex64]) -> Complex64 {
        let Some(j) = &self.jumps else {
            return Complex64::new(0.0, 0.0);
        };
        let dir = (j.direction)(t);
        let w: Complex64 = psi.iter().zip(dir.iter()).map(|(p, d)| p * d).sum();
        let freq = w.im.abs();
        match &j.weight {
            None => j.integrator.integrate(freq, |z| (w * z).exp() - 1.0 - w * z),
            Some(weight) => j.integrator.integrate(freq, |z| ((w * z).exp() - 1.0 - w * z) * weight(t, z)),
        }
    }

    /// Right-hand side `(∂φ, ∂ψ)` of the Riccati system.
    pub fn riccati_rhs(&self, t: f64, psi: &[Complex64]) -> (Complex64, Vec<Complex64>) {
        let d = self.dim;
        let drift = (self.drift)(t);
        let rho = (self.diffusion)(t);
        let b = (self.drift_state)(t);
        let gamma = (self.discount_state)(t);
        let quad = |m: &DMatrix<f64>| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..d {
                for k in 0..d {
                    acc += psi[i] * m[(i, k)] * psi[k];
                }
            }
            acc
        };
        let lin: Complex64 = psi.iter().zip(drift.iter()).map(|(p, w)| p * w).sum();
        let dphi = -lin - 0.5 * quad(&rho) - self.jump_term(t, psi) + (self.discount)(t);
        let mut dpsi = vec![Complex64::new(0.0, 0.0); d];
        for (i, out) in dpsi.iter_mut().enumerate() {
            let mut acc = Complex64::new(gamma[i], 0.0);
            for k in 0..d {
                acc -= b[(k, i)] * psi[k];
            }
            if let Some(a) = self.diffusion_state.get(i) {
                acc -= 0.5 * quad(&a(t));
            }
            *out = acc;
        }
        (dphi, dpsi)
    }
}

/// `(φ, ψ)` on the accepted ODE steps of `[t, T]`, in increasing time.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<Vec<Complex64>>,
    pub u: Vec<Complex64>,
}

impl RiccatiSolution {
    /// Values at the earliest time.
    pub fn initial(&self) -> (Complex64, &[Complex64]) {
        (self.phi[0], &self.psi[0])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t,phi_re,phi_im")?;
        for i in 0..self.u.len() {
            write!(out, ",psi{i}_re,psi{i}_im")?;
        }
        writeln!(out)?;
        for (k, t) in self.times.iter().enumerate() {
            write!(out, "{t:.16e},{:.16e},{:.16e}", self.phi[k].re, self.phi[k].im)?;
            for p in &self.psi[k] {
                write!(out, ",{:.16e},{:.16e}", p.re, p.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn pack(phi: Complex64, psi: &[Complex64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 + 2 * psi.len());
    y.push(phi.re);
    y.push(phi.im);
    for p in psi {
        y.push(p.re);
        y.push(p.im);
    }
    y
}

fn unpack(y: &[f64]) -> (Complex64, Vec<Complex64>) {
    let phi = Complex64::new(y[0], y[1]);
    let psi = y[2..].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    (phi, psi)
}

/// Integrates the Riccati system backward from `T` to `t`.
///
/// Fails with a numeric error naming the time reached when `|ψ|` or `|φ|`
/// exceeds `10⁶` (moment explosion).
pub fn solve_riccati(
    spec: &AffineModelSpec,
    t: f64,
    horizon: f64,
    u: &[Complex64],
    tol: f64,
) -> Result<RiccatiSolution> {
    if !(t < horizon) {
        if t == horizon {
            return Ok(RiccatiSolution {
                times: vec![t],
                phi: vec![Complex64::new(0.0, 0.0)],
                psi: vec![u.to_vec()],
                u: u.to_vec(),
            });
        }
        return Err(Error::Domain(format!("Riccati solve needs t ≤ T (got {t} > {horizon})")));
    }
    if u.len() != spec.dim {
        return Err(Error::Domain(format!("terminal value has length {} but dimension is {}", u.len(), spec.dim)));
    }
    let opts = OdeOptions { rtol: tol, atol: tol * 1e-2, ..OdeOptions::default() };
    let mut cuts: Vec<f64> = spec.breakpoints.iter().copied().filter(|&b| b > t && b < horizon).collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    cuts.push(t);

    let mut times = vec![horizon];
    let mut states = vec![pack(Complex64::new(0.0, 0.0), u)];
    let mut from = horizon;
    for to in cuts {
        let y0 = states.last().unwrap().clone();
        let traj = dopri5(
            |s, y, dy| {
                let (_, psi) = unpack(y);
                let (dphi, dpsi) = spec.riccati_rhs(s, &psi);
                dy.copy_from_slice(&pack(dphi, &dpsi));
                Ok(())
            },
            from,
            &y0,
            to,
            &opts,
        )
        .map_err(|e| match e {
            Error::Explosion { time, magnitude } => Error::Numeric(format!(
                "Riccati solution exploded near t = {time} (magnitude {magnitude:.3e}); the transform is not finite there"
            )),
            other => other,
        })?;
        times.extend_from_slice(&traj.times[1..]);
        states.extend(traj.states.into_iter().skip(1));
        from = to;
    }
    times.reverse();
    states.reverse();
    let (phi, psi) = states.iter().map(|y| unpack(y)).unzip();
    Ok(RiccatiSolution { times, phi, psi, u: u.to_vec() })
}

/// `E[e^{−∫ₜᵀR} e^{uᵀX(T)} | X(t) = x]`.
pub fn discounted_char_fn(
    spec: &AffineModelSpec,
    t: f64,
    horizon: f64,
    u: &[Complex64],
    x: &[f64],
    tol: f64,
) -> Result<Complex64> {
    let sol = solve_riccati(spec, t, horizon, u, tol)?;
    let (phi, psi) = sol.initial();
    let lin: Complex64 = psi.iter().zip(x).map(|(p, xi)| p * xi).sum();
    Ok((phi + lin).exp())
}

/// The pricing-measure `(V, ρ)` system as a two-dimensional affine model
/// without discounting.
pub fn lss_affine_spec(params: &LssPricingParams) -> AffineModelSpec {
    let c2 = params.levy().c.powi(2);
    let p1 = params.clone();
    let p2 = params.clone();
    let p3 = params.clone();
    let p4 = params.clone();
    AffineModelSpec {
        dim: 2,
        drift: Arc::new(move |t| DVector::from_vec(vec![p1.varpi1(t), p1.varpi2(t)])),
        drift_state: Arc::new(|_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])),
        diffusion: Arc::new(move |t| {
            let chi = p2.chi(t);
            let bb = p2.b_bar(t);
            DMatrix::from_row_slice(2, 2, &[1.0, bb, bb, bb * bb]) * (chi * chi * c2)
        }),
        diffusion_state: Vec::new(),
        jumps: params.jumps().has_jumps().then(|| AffineJumps {
            integrator: params.jumps().clone(),
            direction: Arc::new(move |t| {
                let chi = p3.chi(t);
                DVector::from_vec(vec![chi, chi * p3.b_bar(t)])
            }),
            weight: Some(Arc::new(move |t, z| tilt(p4.chi(t) * z))),
        }),
        discount: Arc::new(|_| 0.0),
        discount_state: Arc::new(|_| DVector::zeros(2)),
        breakpoints: params.breakpoints(),
    }
}

/// Closed-form solution of the `(V, ρ)` Riccati system:
/// `ψ₁ = u₁`, `ψ₂ = u₂ + u₁(T − t)` and `φ` by adaptive quadrature in time.
pub fn lss_phi_psi(
    params: &LssPricingParams,
    t: f64,
    horizon: f64,
    u1: Complex64,
    u2: Complex64,
) -> Result<(Complex64, Complex64, Complex64)> {
    if t > horizon {
        return Err(Error::Domain(format!("need t ≤ T (got {t} > {horizon})")));
    }
    let psi2 = u2 + u1 * (horizon - t);
    if t == horizon {
        return Ok((Complex64::new(0.0, 0.0), u1, psi2));
    }
    let phi = integrate_piecewise(
        |s| params.phi_integrand(s, horizon, u1, u2),
        t,
        horizon,
        &params.breakpoints(),
        Tolerance::new(1e-13, 1e-12),
    )
    .map_err(|e| Error::Numeric(format!("φ quadrature failed: {e}")))?
    .value;
    Ok((phi, u1, psi2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::integrate_adaptive;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pure_drift_diffusion_matches_quadrature() {
        let spec = AffineModelSpec {
            drift: Arc::new(|t| DVector::from_vec(vec![0.1 + t, -0.2 * t * t])),
            diffusion: Arc::new(|t| DMatrix::from_row_slice(2, 2, &[0.04 + 0.01 * t, 0.01, 0.01, 0.09])),
            ..AffineModelSpec::gaussian(DVector::zeros(2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2))
        };
        let u = [c(0.3, 1.2), c(-0.5, 0.7)];
        let sol = solve_riccati(&spec, 0.2, 1.5, &u, 1e-11).unwrap();
        let (phi, psi) = sol.initial();
        assert_eq!(psi, &u);
        let integrand = |s: f64| {
            let w = (spec.drift)(s);
            let r = (spec.diffusion)(s);
            let mut q = c(0.0, 0.0);
            for i in 0..2 {
                for k in 0..2 {
                    q += u[i] * r[(i, k)] * u[k];
                }
            }
            u[0] * w[0] + u[1] * w[1] + 0.5 * q
        };
        let exact = integrate_adaptive(integrand, 0.2, 1.5, Tolerance::new(1e-14, 1e-14)).unwrap().value;
        assert!((phi - exact).norm() < 1e-10, "{phi} vs {exact}");
        assert_eq!(sol.phi.last().copied(), Some(c(0.0, 0.0)));
    }

    #[test]
    fn ou_characteristic_function() {
        // dX = κ(θ − X) dt + σ dW.
        let (kappa, theta, sigma) = (1.5, 0.3, 0.4);
        let spec = AffineModelSpec::gaussian(
            DVector::from_vec(vec![kappa * theta]),
            DMatrix::from_element(1, 1, -kappa),
            DMatrix::from_element(1, 1, sigma * sigma),
        );
        let (t, big_t, x) = (0.0, 2.0, 0.1);
        for lam in [0.5, 2.0, 7.0] {
            let u = c(0.0, lam);
            let got = discounted_char_fn(&spec, t, big_t, &[u], &[x], 1e-12).unwrap();
            let tau: f64 = big_t - t;
            let mean = theta + (x - theta) * (-kappa * tau).exp();
            let var = sigma * sigma / (2.0 * kappa) * (1.0 - (-2.0 * kappa * tau).exp());
            let want = (u * mean + 0.5 * u * u * var).exp();
            assert!((got - want).norm() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_terminal_value_is_normalised() {
        let spec = AffineModelSpec::gaussian(
            DVector::from_vec(vec![0.2]),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 0.3),
        );
        let v = discounted_char_fn(&spec, 0.0, 1.0, &[c(0.0, 0.0)], &[0.7], 1e-10).unwrap();
        assert!((v - 1.0).norm() < 1e-14);
    }

    #[test]
    fn explosion_is_reported() {
        // ∂ψ = −½ ψ² α with α = 1 blows up for large real u.
        let mut spec = AffineModelSpec::gaussian(DVector::zeros(1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        spec.diffusion_state = vec![Arc::new(|_| DMatrix::from_element(1, 1, 2.0))];
        let err = solve_riccati(&spec, 0.0, 1.0, &[c(5.0, 0.0)], 1e-10).unwrap_err();
        assert!(err.to_string().contains("exploded"), "{err}");
    }

    #[test]
    fn flow_property() {
        let spec = AffineModelSpec {
            drift_state: Arc::new(|t| DMatrix::from_row_slice(2, 2, &[-1.0 - t, 0.3, 0.0, -0.5])),
            discount: Arc::new(|_| 0.02),
            discount_state: Arc::new(|_| DVector::from_vec(vec![0.0, 1.0])),
            ..AffineModelSpec::gaussian(
                DVector::from_vec(vec![0.1, 0.05]),
                DMatrix::zeros(2, 2),
                DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.01]),
            )
        };
        let u = [c(0.5, 2.0), c(0.0, -1.0)];
        let whole = solve_riccati(&spec, 0.0, 2.0, &u, 1e-11).unwrap();
        let late = solve_riccati(&spec, 1.2, 2.0, &u, 1e-11).unwrap();
        let (phi_s, psi_s) = late.initial();
        let early = solve_riccati(&spec, 0.0, 1.2, psi_s, 1e-11).unwrap();
        let (phi_e, psi_e) = early.initial();
        let (phi_w, psi_w) = whole.initial();
        assert!((phi_e + phi_s - phi_w).norm() < 1e-9);
        for i in 0..2 {
            assert!((psi_e[i] - psi_w[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let spec = AffineModelSpec {
            discount: Arc::new(|_| 0.01),
            ..AffineModelSpec::gaussian(
                DVector::from_vec(vec![0.1]),
                DMatrix::from_element(1, 1, -0.7),
                DMatrix::from_element(1, 1, 0.09),
            )
        };
        for k in 0..6 {
            let u = c(0.2 * k as f64 - 0.4, 1.0 + k as f64);
            let a = discounted_char_fn(&spec, 0.0, 1.0, &[u], &[0.3], 1e-11).unwrap();
            let b = discounted_char_fn(&spec, 0.0, 1.0, &[u.conj()], &[0.3], 1e-11).unwrap();
            assert!((a.conj() - b).norm() < 1e-12);
            if u.re == 0.0 {
                assert!(a.norm() <= (-0.01f64).exp() + 1e-12);
            }
        }
    }
}
