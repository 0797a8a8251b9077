//! The `n -> infinity` limit equations.
//!
//! [`solve_g`] integrates the generating-function system
//!
//! ```text
//! dG(x,t)/dt = lambda (x - G(x,t)) + sum_k alpha(k)/k! (G(x,t)^k - k G(1,t)^(k-1) G(x,t)),
//! G(x, 0) = x,
//! ```
//!
//! jointly for every `x` on the grid (the `x = 1` component drives the rest).
//! [`solve_w`] integrates the Smoluchowski-type system for the cluster
//! densities `w_j`, truncated at `j_max`: mass pushed past `j_max` by a merge
//! is lost and reported as `leak`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{factorial, RateKernel};
use crate::ode::{integrate, OdeOptions, OdeStats};

fn default_j_max() -> usize {
    2000
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_leak_bound() -> f64 {
    1e-6
}
fn default_x_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldConfig {
    pub kernel: RateKernel,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default = "default_x_grid")]
    pub x_grid: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    pub output_times: Vec<f64>,
    /// Largest acceptable `1 - sum_j j w_j`.
    #[serde(default = "default_leak_bound")]
    pub leak_bound: f64,
}

impl MeanFieldConfig {
    pub fn new(kernel: RateKernel, t_max: f64, output_times: Vec<f64>) -> Self {
        MeanFieldConfig {
            kernel,
            j_max: default_j_max(),
            x_grid: default_x_grid(),
            t_max,
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            output_times,
            leak_bound: default_leak_bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_max < 2 {
            return Err(Error::config("j_max must be >= 2"));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::config(format!("{name} must lie in (0, 1e-2]")));
            }
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::config("t_max must be finite and >= 0"));
        }
        if self.output_times.is_empty() {
            return Err(Error::config("output_times must not be empty"));
        }
        if self.output_times.windows(2).any(|w| w[0] > w[1])
            || self
                .output_times
                .iter()
                .any(|&t| !(0.0..=self.t_max).contains(&t))
        {
            return Err(Error::config(
                "output_times must be sorted and lie in [0, t_max]",
            ));
        }
        if self.x_grid.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::config("x_grid values must lie in [0, 1]"));
        }
        if !(self.leak_bound >= 0.0) {
            return Err(Error::config("leak_bound must be >= 0"));
        }
        Ok(())
    }

    fn ode_options(&self) -> OdeOptions {
        OdeOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            ..OdeOptions::default()
        }
    }
}

/// `G(x, t)` on the configured grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GSolution {
    pub times: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `values[i][j] = G(x_grid[j], times[i])`.
    pub values: Vec<Vec<f64>>,
    pub stats: OdeStats,
}

impl GSolution {
    /// `G(1, t)` at every output time.
    pub fn at_one(&self) -> Vec<f64> {
        let idx = self
            .x_grid
            .iter()
            .position(|&x| x == 1.0)
            .expect("grid contains 1");
        self.values.iter().map(|row| row[idx]).collect()
    }
}

/// Cluster densities `w_j(t)`, `j = 1..=j_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct WSolution {
    pub times: Vec<f64>,
    /// `w[i][j - 1] = w_j(times[i])`.
    pub w: Vec<Vec<f64>>,
    /// `sum_j j w_j` at each time.
    pub mass: Vec<f64>,
    /// `1 - mass`.
    pub leak: Vec<f64>,
    pub leak_bound: f64,
    pub leak_exceeded: bool,
    pub stats: OdeStats,
}

impl WSolution {
    pub fn max_leak(&self) -> f64 {
        self.leak.iter().copied().fold(0.0, f64::max)
    }
}

/// Solves the coupled `(G(1,t), G(x_i,t))` system. The grid must contain 1.
pub fn solve_g(config: &MeanFieldConfig) -> Result<GSolution> {
    config.validate()?;
    let x_grid = config.x_grid.clone();
    let one = x_grid
        .iter()
        .position(|&x| x == 1.0)
        .ok_or_else(|| Error::config("x_grid must contain 1"))?;
    let lambda = config.kernel.lambda();
    let coefs: Vec<(usize, f64)> = config.kernel.merge_coefficients().collect();

    let rhs = |_t: f64, g: &[f64], dg: &mut [f64]| {
        let g1 = g[one];
        for ((d, &gx), &x) in dg.iter_mut().zip(g).zip(&x_grid) {
            let mut acc = lambda * (x - gx);
            for &(k, c) in &coefs {
                acc += c * (gx.powi(k as i32) - k as f64 * g1.powi(k as i32 - 1) * gx);
            }
            *d = acc;
        }
    };
    let (values, stats) = integrate(
        rhs,
        0.0,
        &x_grid,
        &config.output_times,
        &config.ode_options(),
    )?;
    Ok(GSolution {
        times: config.output_times.clone(),
        x_grid,
        values,
        stats,
    })
}

/// `out[j] = sum_{l} a[l] b[j - 1 - l]` over 0-based size indices, i.e. the
/// size-`j+1` coefficient of the product of two size-indexed series, dropping
/// everything above the array length. Terms are summed in a fixed order.
fn truncated_product(a: &[f64], b: &[f64], first: usize, out: &mut [f64]) {
    let len = out.len();
    out[..first.min(len)].iter_mut().for_each(|v| *v = 0.0);
    for j in first..len {
        // Sizes: (l + 1) + (j - 1 - l + 1) = j + 1.
        let mut acc = 0.0;
        for (x, y) in a[..j].iter().zip(b[..j].iter().rev()) {
            acc += x * y;
        }
        out[j] = acc;
    }
}

/// Right-hand side of the truncated density system.
struct DensityRhs {
    lambda: f64,
    /// `(k, alpha(k)/k!, alpha(k)/(k-1)!)`.
    coefs: Vec<(usize, f64, f64)>,
    k_max: usize,
    conv: Vec<f64>,
    next: Vec<f64>,
}

impl DensityRhs {
    fn new(kernel: &RateKernel, j_max: usize) -> Self {
        let coefs = kernel
            .support()
            .map(|(k, a)| (k, a / factorial(k), a / factorial(k - 1)))
            .collect();
        DensityRhs {
            lambda: kernel.lambda(),
            coefs,
            k_max: kernel.k_max(),
            conv: vec![0.0; j_max],
            next: vec![0.0; j_max],
        }
    }

    fn eval(&mut self, w: &[f64], dw: &mut [f64]) {
        let total: f64 = w.iter().sum();
        let s: f64 = self
            .coefs
            .iter()
            .map(|&(k, _, c)| c * total.powi(k as i32 - 1))
            .sum();

        let mut frag_gain = 0.0;
        for (j, &wj) in w.iter().enumerate().skip(1) {
            frag_gain += (j + 1) as f64 * wj;
        }
        dw[0] = self.lambda * frag_gain - s * w[0];
        for j in 1..w.len() {
            dw[j] = -(self.lambda + s) * w[j];
        }

        // conv holds the order-r self-convolution; order r is zero below size r.
        self.conv.copy_from_slice(w);
        let mut coef_iter = self.coefs.iter().peekable();
        for order in 2..=self.k_max.min(w.len()) {
            truncated_product(&self.conv, w, order - 1, &mut self.next);
            std::mem::swap(&mut self.conv, &mut self.next);
            while let Some(&&(k, c, _)) = coef_iter.peek() {
                if k > order {
                    break;
                }
                if k == order {
                    for j in order - 1..w.len() {
                        dw[j] += c * self.conv[j];
                    }
                }
                coef_iter.next();
            }
        }
    }
}

fn mass_of(w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(j, &v)| (j + 1) as f64 * v).sum()
}

/// Integrates the truncated density system from `w_j(0) = delta_{j,1}`.
///
/// Fragmentation feeds singletons at rate `lambda sum_{j>=2} j w_j`, which
/// equals `lambda (1 - w_1)` whenever no mass has leaked. With this form the
/// truncated system only loses mass through merges that overshoot `j_max`,
/// so the leak is non-decreasing.
pub fn solve_w(config: &MeanFieldConfig) -> Result<WSolution> {
    config.validate()?;
    let mut rhs = DensityRhs::new(&config.kernel, config.j_max);
    let mut w0 = vec![0.0; config.j_max];
    w0[0] = 1.0;
    let (w, stats) = integrate(
        |_t, w, dw| rhs.eval(w, dw),
        0.0,
        &w0,
        &config.output_times,
        &config.ode_options(),
    )?;
    let mass: Vec<f64> = w.iter().map(|row| mass_of(row)).collect();
    let leak: Vec<f64> = mass.iter().map(|m| 1.0 - m).collect();
    let leak_exceeded = leak.iter().any(|&l| l > config.leak_bound);
    Ok(WSolution {
        times: config.output_times.clone(),
        w,
        mass,
        leak,
        leak_bound: config.leak_bound,
        leak_exceeded,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_discrepancy: f64,
    pub worst_t: f64,
    pub worst_x: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Compares the directly solved `G(x,t)` with `sum_j x^j w_j(t)`.
pub fn consistency_check(g: &GSolution, w: &WSolution, abs_tol: f64) -> Result<ConsistencyReport> {
    if g.times != w.times {
        return Err(Error::domain(
            "G and w solutions use different output times",
        ));
    }
    let mut worst = (0.0, g.times.first().copied().unwrap_or(0.0), 0.0);
    for (i, &t) in g.times.iter().enumerate() {
        for (j, &x) in g.x_grid.iter().enumerate() {
            let series = w.w[i].iter().rev().fold(0.0, |acc, &wj| (acc + wj) * x);
            let d = (series - g.values[i][j]).abs();
            if d > worst.0 {
                worst = (d, t, x);
            }
        }
    }
    let bound = 10.0 * (abs_tol + w.max_leak());
    Ok(ConsistencyReport {
        max_discrepancy: worst.0,
        worst_t: worst.1,
        worst_x: worst.2,
        bound,
        pass: worst.0 <= bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSolution {
    pub g: GSolution,
    pub w: WSolution,
    pub consistency: ConsistencyReport,
}

/// Both halves on the same times and grid, plus their cross-check.
pub fn solve(config: &MeanFieldConfig) -> Result<MeanFieldSolution> {
    let g = solve_g(config)?;
    let w = solve_w(config)?;
    let consistency = consistency_check(&g, &w, config.abs_tol)?;
    Ok(MeanFieldSolution { g, w, consistency })
}
