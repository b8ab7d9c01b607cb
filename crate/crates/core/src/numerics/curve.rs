//! Deterministic time-dependent coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real function of time.
///
/// In JSON a bare number is a constant; `{"breaks": [...], "values": [...]}`
/// is a right-continuous step function; `{"knots": [...], "values": [...]}`
/// is piecewise linear with flat extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Curve {
    Constant(f64),
    Steps { breaks: Vec<f64>, values: Vec<f64> },
    Linear { knots: Vec<f64>, values: Vec<f64> },
}

impl Default for Curve {
    fn default() -> Self {
        Curve::Constant(0.0)
    }
}

impl From<f64> for Curve {
    fn from(v: f64) -> Self {
        Curve::Constant(v)
    }
}

impl Curve {
    pub fn constant(v: f64) -> Self {
        Curve::Constant(v)
    }

    /// Step function equal to `values[i]` on `[breaks[i], breaks[i+1])`,
    /// `values[0]` before `breaks[0]` and `values[last]` afterwards.
    pub fn steps(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let c = Curve::Steps { breaks, values };
        c.validate()?;
        Ok(c)
    }

    pub fn linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let c = Curve::Linear { knots, values };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (xs, ys) = match self {
            Curve::Constant(v) => {
                return if v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("curve constant must be finite".into()))
                };
            }
            Curve::Steps { breaks, values } => (breaks, values),
            Curve::Linear { knots, values } => (knots, values),
        };
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Config(format!(
                "curve needs matching non-empty abscissae and values (got {} and {})",
                xs.len(),
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("curve abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("curve entries must be finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Curve::Constant(v) => *v,
            Curve::Steps { breaks, values } => {
                let idx = breaks.partition_point(|&b| b <= t);
                values[idx.saturating_sub(1)]
            }
            Curve::Linear { knots, values } => {
                if t <= knots[0] {
                    return values[0];
                }
                let last = knots.len() - 1;
                if t >= knots[last] {
                    return values[last];
                }
                let i = knots.partition_point(|&k| k <= t) - 1;
                let w = (t - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    /// Points where the curve or its slope may jump.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Curve::Constant(_) => &[],
            Curve::Steps { breaks, .. } => breaks,
            Curve::Linear { knots, .. } => knots,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Curve::Constant(_) => true,
            Curve::Steps { values, .. } | Curve::Linear { values, .. } => {
                values.windows(2).all(|w| w[0] == w[1])
            }
        }
    }

    /// Exact `∫_a^b` of the curve.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut edges = vec![a];
        edges.extend(self.breakpoints().iter().copied().filter(|&x| x > a && x < b));
        edges.push(b);
        edges
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                match self {
                    // Each piece is affine, so the midpoint rule is exact.
                    Curve::Linear { .. } => 0.5 * (self.eval(lo) + self.eval(hi)) * (hi - lo),
                    _ => self.eval(0.5 * (lo + hi)) * (hi - lo),
                }
            })
            .sum()
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Curve::Constant(v) => v.abs(),
            Curve::Steps { values, .. } | Curve::Linear { values, .. } => {
                values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
        }
    }

    /// Range of values taken on `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = self.eval(a).min(self.eval(b));
        let mut hi = self.eval(a).max(self.eval(b));
        for &x in self.breakpoints().iter().filter(|&&x| x > a && x < b) {
            let v = self.eval(x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Total variation on `[a, b]`.
    pub fn total_variation(&self, a: f64, b: f64) -> f64 {
        let mut pts = vec![a];
        pts.extend(self.breakpoints().iter().copied().filter(|&x| x > a && x < b));
        pts.push(b);
        match self {
            Curve::Constant(_) => 0.0,
            Curve::Linear { .. } => pts.windows(2).map(|w| (self.eval(w[1]) - self.eval(w[0])).abs()).sum(),
            Curve::Steps { .. } => {
                let mut tv = 0.0;
                let mut prev = self.eval(a);
                for &x in &pts[1..pts.len() - 1] {
                    let v = self.eval(x);
                    tv += (v - prev).abs();
                    prev = v;
                }
                tv
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_are_right_continuous() {
        let c = Curve::steps(vec![0.0, 0.5], vec![1.0, 3.0]).unwrap();
        assert_eq!(c.eval(0.49), 1.0);
        assert_eq!(c.eval(0.5), 3.0);
        assert_eq!(c.eval(-1.0), 1.0);
        assert!((c.integral(0.0, 1.0) - 2.0).abs() < 1e-15);
        assert_eq!(c.total_variation(0.0, 1.0), 2.0);
    }

    #[test]
    fn linear_integral_is_exact() {
        let c = Curve::linear(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert!((c.integral(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((c.integral(0.5, 1.5) - 1.5).abs() < 1e-15);
        assert!((c.integral(-1.0, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn bare_number_deserializes_as_constant() {
        let c: Curve = serde_json::from_str("0.25").unwrap();
        assert_eq!(c, Curve::Constant(0.25));
        let s: Curve = serde_json::from_str(r#"{"breaks":[0,1],"values":[1,2]}"#).unwrap();
        assert!(matches!(s, Curve::Steps { .. }));
    }

    #[test]
    fn rejects_unsorted_abscissae() {
        assert!(Curve::linear(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
