//! Monte Carlo reductions that give the same bits regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Running first and second moments of a sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        if self.n == 0 {
            return McEstimate { mean: f64::NAN, stderr: f64::NAN, n: 0 };
        }
        let mean = self.sum.value() / n;
        let var = if self.n > 1 {
            ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate { mean, stderr: (var / n).sqrt(), n: self.n }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

impl McEstimate {
    /// Whether `x` lies within `k` standard errors of the mean.
    pub fn within(&self, x: f64, k: f64) -> bool {
        (x - self.mean).abs() <= k * self.stderr
    }

    pub fn ci99(&self) -> (f64, f64) {
        (self.mean - Z99 * self.stderr, self.mean + Z99 * self.stderr)
    }

    pub fn in_ci99(&self, x: f64) -> bool {
        self.within(x, Z99)
    }

    /// Distance of `x` from the mean in standard errors.
    pub fn z_score(&self, x: f64) -> f64 {
        if self.stderr == 0.0 {
            if x == self.mean { 0.0 } else { f64::INFINITY }
        } else {
            (x - self.mean) / self.stderr
        }
    }
}

/// Paths per work unit. Fixed so the reduction tree never depends on the pool.
pub const CHUNK: u64 = 512;

/// Runs `sample(path_index, out)` for every path and reduces each of the
/// `width` outputs to a mean and standard error.
///
/// Chunks of paths run in parallel; their partial moments are merged in chunk
/// order, so the result is bit-identical for any number of threads.
pub fn monte_carlo<F>(n_paths: u64, width: usize, sample: F) -> Vec<McEstimate>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            let mut out = vec![0.0; width];
            let end = ((c + 1) * CHUNK).min(n_paths);
            for path in c * CHUNK..end {
                sample(path, &mut out);
                for (m, &x) in acc.iter_mut().zip(&out) {
                    m.push(x);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total.iter().map(Moments::estimate).collect()
}
