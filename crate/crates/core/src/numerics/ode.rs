//! Dormand–Prince 5(4) integrator with embedded error control.
//!
//! The integrator works on real state vectors and runs in either time
//! direction; complex systems are handled by callers through real/imaginary
//! splitting.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step magnitude; `None` selects one from the derivative scale.
    pub initial_step: Option<f64>,
    /// Largest step magnitude allowed.
    pub max_step: f64,
    pub max_steps: usize,
    /// Abort once any state component exceeds this magnitude.
    pub blowup_threshold: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 200_000,
            blowup_threshold: 1e6,
        }
    }
}

/// Accepted steps of an integration, including the starting point.
#[derive(Clone, Debug, Default)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub rejected: usize,
}

impl OdeTrajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Differences between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1`, which may lie before `t0`.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`. Every accepted step is
/// recorded in the returned trajectory.
pub fn dopri5<F>(mut rhs: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions) -> Result<OdeTrajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut traj = OdeTrajectory {
        times: vec![t0],
        states: vec![y0.to_vec()],
        rejected: 0,
    };
    if t0 == t1 {
        return Ok(traj);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(t, &y, &mut k1)?;
    check_finite(t, &k1)?;

    let mut h = match opts.initial_step {
        Some(h0) => h0.abs().min(span),
        None => initial_step(&y, &k1, opts, span),
    };
    h = h.min(opts.max_step);
    let mut last_ratio: f64 = 1e-4;
    let mut steps = 0usize;

    while (t1 - t) * dir > 0.0 {
        if steps >= opts.max_steps {
            return Err(Error::Numeric(format!(
                "ODE integrator exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        steps += 1;
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        if hs.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Numeric(format!("ODE step size underflow at t = {t}")));
        }

        for i in 0..n {
            stage[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(t + C2 * hs, &stage, &mut k2)?;
        for i in 0..n {
            stage[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * hs, &stage, &mut k3)?;
        for i in 0..n {
            stage[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * hs, &stage, &mut k4)?;
        for i in 0..n {
            stage[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * hs, &stage, &mut k5)?;
        for i in 0..n {
            stage[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if last { t1 } else { t + hs };
        rhs(t_next, &stage, &mut k6)?;
        for i in 0..n {
            y_new[i] = y[i]
                + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_next, &y_new, &mut k7)?;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale).powi(2);
        }
        let err = (err_sq / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            traj.rejected += 1;
            h *= 0.2;
            continue;
        }

        if err <= 1.0 {
            t = t_next;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let magnitude = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if magnitude > opts.blowup_threshold || !magnitude.is_finite() {
                return Err(Error::Explosion { time: t, magnitude });
            }
            traj.times.push(t);
            traj.states.push(y.clone());
            // PI step-size controller (Hairer–Wanner, beta = 0.04).
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.7 / 5.0) * last_ratio.powf(0.04 / 1.0)).clamp(0.2, 5.0)
            };
            last_ratio = err.max(1e-4);
            h = (h * fac).min(opts.max_step);
        } else {
            traj.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }
    Ok(traj)
}

fn check_finite(t: f64, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite derivative at t = {t}")))
    }
}

fn initial_step(y: &[f64], dy: &[f64], opts: &OdeOptions, span: f64) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let d0 = (d0 / n).sqrt();
    let d1 = (d1 / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).min(0.1 * span.max(1e-3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_forward_and_backward() {
        let opts = OdeOptions::default();
        let fwd = dopri5(
            |_, y, dy| {
                dy[0] = -2.0 * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            1.5,
            &opts,
        )
        .unwrap();
        assert!((fwd.last()[0] - (-3.0f64).exp()).abs() < 1e-10);

        let back = dopri5(
            |_, y, dy| {
                dy[0] = -2.0 * y[0];
                Ok(())
            },
            1.5,
            &[(-3.0f64).exp()],
            0.0,
            &opts,
        )
        .unwrap();
        assert!((back.last()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_conserves_phase() {
        let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let traj = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &opts,
        )
        .unwrap();
        let y = traj.last();
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn blowup_is_reported() {
        let err = dopri5(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            2.0,
            &OdeOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Explosion { time, .. } => assert!(time < 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
