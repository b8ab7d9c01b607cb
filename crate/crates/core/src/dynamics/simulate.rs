//! Physical-measure path simulation.
//!
//! Every path owns an independent random stream (see [`crate::rng`]), so the
//! batch functions here return the same numbers whatever the thread count.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::levy::{sample_path_increments, LevyModel, PathIncrements};
use crate::dynamics::measure::girsanov_path;
use crate::dynamics::model::{MarketModel, StepTable, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::path_rng;

/// Stream salt for physical-measure draws.
pub const SALT_PHYSICAL: u64 = 0x5031;
/// Stream salt for pricing-measure draws.
pub const SALT_PRICING: u64 = 0x5132;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Physical,
    Pricing,
}

/// Lévy increments for a batch of paths on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyIncrements {
    pub grid: TimeGrid,
    pub seed: u64,
    pub paths: Vec<PathIncrements>,
}

impl LevyIncrements {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }
}

pub fn path_increments(levy: &LevyModel, grid: TimeGrid, seed: u64, path: u64) -> PathIncrements {
    let mut rng = path_rng(seed, path, SALT_PHYSICAL);
    sample_path_increments(levy, grid.dt(), grid.steps, &mut rng)
}

pub fn simulate_levy_increments(
    levy: &LevyModel,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> LevyIncrements {
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| path_increments(levy, grid, seed, p))
        .collect();
    LevyIncrements { grid, seed, paths }
}

/// `ξ(t_k) = H(t_k) ξ₀ + Σ_{j<k} H(t_k − t_j) χ(t_j) ΔL_j`.
pub fn xi_convolution_path(model: &MarketModel, table: &StepTable, inc: &PathIncrements) -> Vec<f64> {
    let n = table.grid.steps;
    let dt = table.grid.dt();
    let driven: Vec<f64> = (0..n)
        .map(|j| table.chi[j] * inc.increment(table.drift_b, model.levy.c, dt, j))
        .collect();
    let mut xi = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut acc = table.h[k] * model.xi0;
        for (j, d) in driven.iter().enumerate().take(k) {
            acc += table.h[k - j] * d;
        }
        xi.push(acc);
    }
    xi
}

pub fn simulate_xi_convolution(model: &MarketModel, increments: &LevyIncrements) -> Result<Vec<Vec<f64>>> {
    let table = StepTable::new(model, increments.grid)?;
    Ok(increments
        .paths
        .par_iter()
        .map(|inc| xi_convolution_path(model, &table, inc))
        .collect())
}

/// Euler scheme for the log-spot. Returns `ξ` and the memory integrals
/// `∫₀^{t_k} M(t_k − u) ξ(u) du` used for its drift.
pub fn xi_euler_path(model: &MarketModel, table: &StepTable, inc: &PathIncrements) -> (Vec<f64>, Vec<f64>) {
    let n = table.grid.steps;
    let dt = table.grid.dt();
    let mut xi = Vec::with_capacity(n + 1);
    let mut memory = Vec::with_capacity(n + 1);
    xi.push(model.xi0);
    for k in 0..n {
        let a = table.memory(&xi, k);
        memory.push(a);
        let next = xi[k] + a * dt + table.chi[k] * inc.increment(table.drift_b, model.levy.c, dt, k);
        xi.push(next);
    }
    memory.push(table.memory(&xi, n));
    (xi, memory)
}

pub fn simulate_xi_euler(model: &MarketModel, increments: &LevyIncrements) -> Result<Vec<Vec<f64>>> {
    let table = StepTable::new(model, increments.grid)?;
    Ok(increments
        .paths
        .par_iter()
        .map(|inc| xi_euler_path(model, &table, inc).0)
        .collect())
}

/// Euler scheme for the short rate and the risk premium, driven by the same
/// increments as the log-spot whose memory integrals are `memory`.
pub fn r_rho_path(
    model: &MarketModel,
    table: &StepTable,
    memory: &[f64],
    inc: &PathIncrements,
) -> (Vec<f64>, Vec<f64>) {
    let n = table.grid.steps;
    let dt = table.grid.dt();
    let mut r = Vec::with_capacity(n + 1);
    let mut rho = Vec::with_capacity(n + 1);
    r.push(model.r0);
    rho.push(model.rho0);
    for k in 0..n {
        let noise = table.chi[k] * (model.levy.c * inc.dw[k] + inc.compensated_jumps[k]);
        let (rk, pk) = (r[k], rho[k]);
        r.push(rk + (table.a[k] - table.b2[k] * rk) * dt + table.b1[k] * noise);
        rho.push(
            pk + (table.a_bar[k] + table.b1_bar[k] * memory[k] - table.b2_bar[k] * rk - table.b3_bar[k] * pk) * dt
                + table.b1_bar[k] * noise,
        );
    }
    (r, rho)
}

/// Rate paths and premium paths, one row per path.
pub type RatePremiumPaths = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Rate and premium paths for log-spot paths produced from `increments`.
pub fn simulate_r_rho(
    model: &MarketModel,
    xi_paths: &[Vec<f64>],
    increments: &LevyIncrements,
) -> Result<RatePremiumPaths> {
    if xi_paths.len() != increments.n_paths() {
        return Err(Error::Config(format!(
            "{} log-spot paths but {} increment paths",
            xi_paths.len(),
            increments.n_paths()
        )));
    }
    let table = StepTable::new(model, increments.grid)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = xi_paths
        .par_iter()
        .zip(increments.paths.par_iter())
        .map(|(xi, inc)| {
            let memory: Vec<f64> = (0..=table.grid.steps).map(|k| table.memory(xi, k)).collect();
            r_rho_path(model, &table, &memory, inc)
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// One physical-measure path with its density process.
#[derive(Clone, Debug)]
pub struct PhysicalPath {
    pub xi: Vec<f64>,
    pub memory: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn physical_path(model: &MarketModel, table: &StepTable, seed: u64, path: u64) -> Result<PhysicalPath> {
    let inc = path_increments(&model.levy, table.grid, seed, path);
    let (xi, memory) = xi_euler_path(model, table, &inc);
    let (r, rho) = r_rho_path(model, table, &memory, &inc);
    let z = girsanov_path(model, table, &memory, &r, &rho, &inc)?;
    Ok(PhysicalPath { xi, memory, r, rho, z })
}

/// Per-path arrays on a common grid. Row `p` of each matrix is path `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub measure: Measure,
    pub grid: TimeGrid,
    pub master_seed: u64,
    pub xi: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub spot: Vec<Vec<f64>>,
    /// Density process; present for physical-measure sets only.
    pub z: Option<Vec<Vec<f64>>>,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.xi.len()
    }

    /// Writes one CSV per variable (rows are times, columns paths), keeping
    /// at most `max_paths` columns. Returns the written file paths.
    pub fn write_csv(&self, dir: &Path, max_paths: usize) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut written = Vec::new();
        let mut vars: Vec<(&str, &Vec<Vec<f64>>)> =
            vec![("xi", &self.xi), ("r", &self.r), ("rho", &self.rho), ("S", &self.spot)];
        if let Some(z) = &self.z {
            vars.push(("Z", z));
        }
        let cols = self.n_paths().min(max_paths);
        for (name, data) in vars {
            let file = dir.join(format!("{name}.csv"));
            let mut out = std::io::BufWriter::new(fs::File::create(&file).map_err(io_err)?);
            let mut header = String::from("t");
            for p in 0..cols {
                header.push_str(&format!(",path{p}"));
            }
            writeln!(out, "{header}").map_err(io_err)?;
            for k in 0..=self.grid.steps {
                let mut line = format!("{:.16e}", self.grid.time(k));
                for row in data.iter().take(cols) {
                    line.push_str(&format!(",{:.16e}", row[k]));
                }
                writeln!(out, "{line}").map_err(io_err)?;
            }
            out.flush().map_err(io_err)?;
            written.push(file);
        }
        Ok(written)
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("i/o failure: {e}"))
}

/// Simulates `n_paths` physical-measure paths including the density process.
pub fn simulate_physical(model: &MarketModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathSet> {
    let table = StepTable::new(model, grid)?;
    let paths: Vec<PhysicalPath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| physical_path(model, &table, seed, p))
        .collect::<Result<_>>()?;
    let mut set = PathSet {
        measure: Measure::Physical,
        grid,
        master_seed: seed,
        xi: Vec::with_capacity(n_paths),
        r: Vec::with_capacity(n_paths),
        rho: Vec::with_capacity(n_paths),
        spot: Vec::with_capacity(n_paths),
        z: Some(Vec::with_capacity(n_paths)),
    };
    for p in paths {
        set.spot.push(p.xi.iter().map(|x| x.exp()).collect());
        set.xi.push(p.xi);
        set.r.push(p.r);
        set.rho.push(p.rho);
        set.z.as_mut().unwrap().push(p.z);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::levy::{CompoundPoisson, JumpLaw};
    use crate::dynamics::model::{MarketSpec, PremiumCoefficients, RateCoefficients, VolProcess};
    use crate::kernel::MemoryKernel;

    fn spec(kernel: MemoryKernel, levy: LevyModel) -> MarketSpec {
        MarketSpec {
            kernel,
            levy,
            chi: VolProcess::constant(1.0, 0.5, 2.0),
            rate: RateCoefficients { a: 0.02.into(), b1: 0.0.into(), b2: 0.5.into() },
            premium: PremiumCoefficients {
                a_bar: 0.01.into(),
                b1_bar: 0.5.into(),
                b2_bar: 0.1.into(),
                b3_bar: 0.5.into(),
            },
            r0: 0.03,
            rho0: 0.02,
            xi0: 0.1,
            horizon: 1.0,
        }
    }

    fn jumpy() -> LevyModel {
        LevyModel {
            varsigma: 0.0,
            c: 0.3,
            jumps: Some(CompoundPoisson { intensity: 2.0, law: JumpLaw::Normal { mean: -0.05, std: 0.1 } }),
        }
    }

    #[test]
    fn zero_kernel_convolution_is_the_levy_path() {
        let model = MarketModel::from_spec(spec(MemoryKernel::Constant { level: 0.0 }, jumpy()), 20).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let inc = simulate_levy_increments(&model.levy, grid, 3, 5);
        let conv = simulate_xi_convolution(&model, &inc).unwrap();
        let euler = simulate_xi_euler(&model, &inc).unwrap();
        let b = model.levy.drift();
        for (p, path) in conv.iter().enumerate() {
            let mut level = 0.1;
            assert_eq!(path[0], 0.1);
            for k in 0..20 {
                level += inc.paths[p].increment(b, 0.3, grid.dt(), k);
                assert!((path[k + 1] - level).abs() < 1e-14);
                assert!((euler[p][k + 1] - level).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_coefficients_freeze_rate_and_premium() {
        let mut s = spec(MemoryKernel::PowerLaw { alpha: 0.25 }, jumpy());
        s.rate = RateCoefficients::default();
        s.premium = PremiumCoefficients::default();
        let model = MarketModel::from_spec(s, 10).unwrap();
        let inc = simulate_levy_increments(&model.levy, TimeGrid::new(1.0, 10).unwrap(), 2, 1);
        let xi = simulate_xi_euler(&model, &inc).unwrap();
        let (r, rho) = simulate_r_rho(&model, &xi, &inc).unwrap();
        assert!(r.iter().flatten().all(|&x| x == 0.03));
        assert!(rho.iter().flatten().all(|&x| x == 0.02));
    }

    #[test]
    fn physical_set_is_reproducible_and_consistent() {
        let model = MarketModel::from_spec(spec(MemoryKernel::PowerLaw { alpha: 0.25 }, jumpy()), 10).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let a = simulate_physical(&model, grid, 8, 99).unwrap();
        let b = simulate_physical(&model, grid, 8, 99).unwrap();
        assert_eq!(a, b);
        for p in 0..8 {
            assert_eq!(a.z.as_ref().unwrap()[p][0], 1.0);
            for k in 0..=16 {
                assert_eq!(a.spot[p][k], a.xi[p][k].exp());
                assert!(a.z.as_ref().unwrap()[p][k] > 0.0);
            }
        }
    }

    #[test]
    fn csv_export_caps_columns() {
        let model = MarketModel::from_spec(spec(MemoryKernel::PowerLaw { alpha: 0.25 }, jumpy()), 10).unwrap();
        let set = simulate_physical(&model, TimeGrid::new(1.0, 4).unwrap(), 5, 3).unwrap();
        let dir = std::env::temp_dir().join(format!("langevin-csv-{}", std::process::id()));
        let files = set.write_csv(&dir, 3).unwrap();
        assert_eq!(files.len(), 5);
        let text = fs::read_to_string(dir.join("S.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "t,path0,path1,path2");
        fs::remove_dir_all(dir).ok();
    }
}
