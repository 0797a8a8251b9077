//! Stationary behaviour of the limit dynamics.
//!
//! For `lambda > 0` the cluster count `G(1, t)` relaxes to the unique root of
//! `F_1(g) = lambda (1 - g) + sum_k alpha(k)/k! (1 - k) g^k` on `[0, 1]`.
//! Given that root, the stationary densities `w_j` follow from an explicit
//! recursion in `j`. As `lambda -> 0` the normalised distribution tends to a
//! law that depends on the kernel only through `m`:
//!
//! ```text
//! p_k = (1/k) ((m-1)/m)^k (1/m)^N C(mN, N),  N = (k-1)/(m-1),
//! ```
//!
//! and zero when `m - 1` does not divide `k - 1`. Its generating function is
//! the compositional inverse of `(m z - z^m)/(m - 1)`, which
//! [`lagrange_invert`] recovers coefficient by coefficient.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{factorial, RateKernel, SizeDistribution};

/// `F_1(g)`: drift of `G(1, t)`.
pub fn f1(kernel: &RateKernel, lambda: f64, g: f64) -> f64 {
    let mut acc = lambda * (1.0 - g);
    for (k, c) in kernel.merge_coefficients() {
        acc += c * (1.0 - k as f64) * g.powi(k as i32);
    }
    acc
}

/// `F_1'(g) = -lambda - sum_k alpha(k)/(k-2)! g^(k-1)`.
pub fn f1_prime(kernel: &RateKernel, lambda: f64, g: f64) -> f64 {
    let mut acc = -lambda;
    for (k, a) in kernel.support() {
        acc -= a / factorial(k - 2) * g.powi(k as i32 - 1);
    }
    acc
}

/// `F_x(g)` with `G(1)` frozen at `g1`.
pub fn fx(kernel: &RateKernel, lambda: f64, g1: f64, x: f64, g: f64) -> f64 {
    let mut acc = lambda * (x - g);
    for (k, c) in kernel.merge_coefficients() {
        acc += c * (g.powi(k as i32) - k as f64 * g1.powi(k as i32 - 1) * g);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub lambda: f64,
    /// Stationary cluster count per particle, `G_lambda(1)`.
    #[serde(rename = "G1")]
    pub g1: f64,
    /// `sum_k alpha(k)/(k-1)! G1^(k-1)`: per-cluster merge loss rate.
    #[serde(rename = "S")]
    pub s: f64,
    /// `|F_1(G1)|`.
    pub residual: f64,
}

fn bisect(mut lo: f64, mut hi: f64, width: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    // f(lo) >= 0 >= f(hi), f decreasing.
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Root of `F_1` in `(0, 1)`: bisection to width `1e-13`, then Newton steps
/// kept inside the final bracket.
pub fn solve_g1(kernel: &RateKernel, lambda: f64) -> Result<FixedPoint> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let f = |g: f64| f1(kernel, lambda, g);
    let (lo, hi) = bisect(0.0, 1.0, 1e-13, f);
    let mut g = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = f1_prime(kernel, lambda, g);
        if d == 0.0 {
            break;
        }
        let next = g - f(g) / d;
        if !(next >= lo && next <= hi) || f(next).abs() >= f(g).abs() {
            break;
        }
        g = next;
    }
    let s = kernel
        .support()
        .map(|(k, a)| a / factorial(k - 1) * g.powi(k as i32 - 1))
        .sum();
    Ok(FixedPoint {
        lambda,
        g1: g,
        s,
        residual: f(g).abs(),
    })
}

/// Stationary `G_lambda(x)`: the root of `F_x` on `[0, G1]`. Used to validate
/// the density recursion, which yields every coefficient at once.
pub fn solve_gx(kernel: &RateKernel, fp: &FixedPoint, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("x = {x} outside [0, 1]")));
    }
    if x == 1.0 {
        return Ok(fp.g1);
    }
    let (lo, hi) = bisect(0.0, fp.g1, 1e-15, |g| fx(kernel, fp.lambda, fp.g1, x, g));
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDensities {
    pub fixed_point: FixedPoint,
    /// `w_j`, the stationary clusters of size `j` per particle.
    pub w: SizeDistribution,
    /// `p_j = w_j / G1`.
    pub p: SizeDistribution,
    /// `|sum_{j <= j_max} w_j - G1|`.
    pub truncation_residual: f64,
    /// Set when the residual exceeds `1e-6`.
    pub truncation_warning: bool,
}

/// Stationary densities from the fixed point: `w_1 = lambda/(lambda + S)` and
/// for `j >= 2`
///
/// ```text
/// w_j = sum_k alpha(k)/k! conv_k(w)_j / (lambda + S),
/// ```
///
/// where `conv_k(w)_j` sums `w_{l_1}...w_{l_k}` over ordered compositions of
/// `j` into `k` positive parts, so it only involves `w_1..w_{j-1}`.
/// The kernel's own `lambda` is ignored.
pub fn stationary_w(kernel: &RateKernel, lambda: f64, j_max: usize) -> Result<StationaryDensities> {
    if j_max < 2 {
        return Err(Error::domain("j_max must be >= 2"));
    }
    let fp = solve_g1(kernel, lambda)?;
    let denom = lambda + fp.s;
    let k_top = kernel.k_max().min(j_max);
    let coefs: Vec<(usize, f64)> = kernel
        .merge_coefficients()
        .filter(|&(k, _)| k <= k_top)
        .collect();

    // Index by size; index 0 unused. conv[r][j] is the order-r convolution.
    let mut w = vec![0.0; j_max + 1];
    let mut conv = vec![vec![0.0; j_max + 1]; k_top + 1];
    w[1] = lambda / denom;
    conv[1][1] = w[1];
    for j in 2..=j_max {
        for r in 2..=k_top {
            if r > j {
                break;
            }
            let (lower, upper) = conv.split_at_mut(r);
            let prev = &lower[r - 1];
            let mut acc = 0.0;
            for l in 1..=(j - (r - 1)) {
                acc += w[l] * prev[j - l];
            }
            upper[0][j] = acc;
        }
        let gain: f64 = coefs
            .iter()
            .map(|&(k, c)| if k <= j { c * conv[k][j] } else { 0.0 })
            .sum();
        w[j] = gain / denom;
        conv[1][j] = w[j];
    }

    let total: f64 = w.iter().sum();
    let residual = (total - fp.g1).abs();
    let p: Vec<f64> = w.iter().map(|v| v / fp.g1).collect();
    let tail = (1.0 - total / fp.g1).max(0.0);
    Ok(StationaryDensities {
        fixed_point: fp,
        w: SizeDistribution::from_indexed(w, (fp.g1 - total).max(0.0)),
        p: SizeDistribution::from_indexed(p, tail),
        truncation_residual: residual,
        truncation_warning: residual > 1e-6,
    })
}

fn binomial_big(n: u64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `lim_{lambda -> 0} p_k` as an exact rational.
pub fn limit_p_exact(m: u64, k: u64) -> Result<BigRational> {
    if m < 2 || k < 1 {
        return Err(Error::domain("need m >= 2 and k >= 1"));
    }
    if (k - 1) % (m - 1) != 0 {
        return Ok(BigRational::zero());
    }
    let big_n = (k - 1) / (m - 1);
    let numer = num_traits::pow(BigInt::from(m - 1), k as usize) * binomial_big(m * big_n, big_n);
    let denom = BigInt::from(k) * num_traits::pow(BigInt::from(m), (k + big_n) as usize);
    Ok(BigRational::new(numer, denom))
}

/// `lim_{lambda -> 0} p_k` through log-gamma; zero off the support.
pub fn limit_p_lgamma(m: u64, k: u64) -> f64 {
    if m < 2 || k < 1 || (k - 1) % (m - 1) != 0 {
        return 0.0;
    }
    let big_n = ((k - 1) / (m - 1)) as f64;
    let (mf, kf) = (m as f64, k as f64);
    let ln_binom = libm::lgamma(mf * big_n + 1.0)
        - libm::lgamma(big_n + 1.0)
        - libm::lgamma((mf - 1.0) * big_n + 1.0);
    let ln_p = -kf.ln() + kf * ((mf - 1.0) / mf).ln() - big_n * mf.ln() + ln_binom;
    ln_p.exp()
}

/// Sizes up to this bound are evaluated exactly.
pub const EXACT_LIMIT_CUTOFF: u64 = 64;

/// The `lambda -> 0` stationary law for smallest merge order `m`, `k = 1..=k_max`.
pub fn limit_p(m: u64, k_max: u64) -> Result<SizeDistribution> {
    if m < 2 {
        return Err(Error::domain("m must be >= 2"));
    }
    if k_max < 1 {
        return Err(Error::domain("k_max must be >= 1"));
    }
    let mut values = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let v = if k <= EXACT_LIMIT_CUTOFF {
            limit_p_exact(m, k)?.to_f64().unwrap_or(0.0)
        } else {
            limit_p_lgamma(m, k)
        };
        values.push(v);
    }
    let mut dist = SizeDistribution::from_sizes(values);
    dist.tail_mass_estimate = (1.0 - dist.total()).max(0.0);
    Ok(dist)
}

/// A power series `sum_{k>=1} a_k z^k` with no constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    /// `coeffs[i] = a_{i+1}`.
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        PowerSeries { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `a_k`, zero beyond the truncation.
    pub fn coeff(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.coeffs.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(m z - z^m)/(m - 1)`, whose inverse generates the limit law.
    pub fn limit_equation(m: usize) -> Self {
        let mut c = vec![0.0; m];
        let mf = m as f64;
        c[0] = mf / (mf - 1.0);
        c[m - 1] -= 1.0 / (mf - 1.0);
        PowerSeries { coeffs: c }
    }

    /// `self(inner(y))` truncated at order `k`.
    pub fn compose(&self, inner: &PowerSeries, k: usize) -> PowerSeries {
        let mut out = vec![0.0; k];
        // power holds inner^j, coefficients of y^1..y^k (index 0 = y^1).
        let mut power: Vec<f64> = (1..=k).map(|i| inner.coeff(i)).collect();
        for j in 1..=k {
            let a = self.coeff(j);
            if a != 0.0 {
                for (o, p) in out.iter_mut().zip(&power) {
                    *o += a * p;
                }
            }
            if j < k {
                power = mul_shifted(&power, &inner.coeffs, k);
            }
        }
        PowerSeries { coeffs: out }
    }
}

/// Product of two series without constant term, both stored from `z^1`,
/// truncated at `z^k`.
fn mul_shifted(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let deg = i + j + 2;
            if deg > k {
                break;
            }
            out[deg - 1] += x * y;
        }
    }
    out
}

/// Plain power-series product with constant terms, truncated to `len`.
fn mul_full(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate().take(len) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Compositional inverse `g` of `f` (with `a_1 != 0`) to order `k`, via
/// `b_j = (1/j) [z^(j-1)] (z / f(z))^j`.
pub fn lagrange_invert(f: &PowerSeries, k: usize) -> Result<PowerSeries> {
    let a1 = f.coeff(1);
    if a1 == 0.0 || !a1.is_finite() {
        return Err(Error::domain(
            "series inversion needs a nonzero linear coefficient",
        ));
    }
    if k == 0 {
        return Ok(PowerSeries::new(Vec::new()));
    }
    // q(z) = f(z)/z, h = 1/q by the usual recurrence.
    let q: Vec<f64> = (0..k).map(|i| f.coeff(i + 1)).collect();
    let mut h = vec![0.0; k];
    h[0] = 1.0 / a1;
    for n in 1..k {
        let mut acc = 0.0;
        for i in 1..=n {
            acc += q[i] * h[n - i];
        }
        h[n] = -acc / a1;
    }
    let mut b = Vec::with_capacity(k);
    let mut power = h.clone();
    for j in 1..=k {
        b.push(power[j - 1] / j as f64);
        if j < k {
            power = mul_full(&power, &h, k);
        }
    }
    Ok(PowerSeries::new(b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    /// `exp(intercept)`: the fitted prefactor of `k^slope`.
    pub prefactor: f64,
    pub points: usize,
}

/// Least-squares slope of `ln p_k` against `ln k` over the nonzero entries
/// with `k_lo <= k <= k_hi`. For a limit law with `m > 2` the nonzero entries
/// are exactly the sizes `k = 1 (mod m-1)`.
pub fn tail_exponent_fit(p: &SizeDistribution, k_lo: usize, k_hi: usize) -> Result<TailFit> {
    let pts: Vec<(f64, f64)> = p
        .iter()
        .filter(|&(k, v)| k >= k_lo && k <= k_hi && v > 0.0)
        .map(|(k, v)| ((k as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::domain(format!(
            "need at least 10 supported points in [{k_lo}, {k_hi}], found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(TailFit {
        slope,
        stderr,
        prefactor: intercept.exp(),
        points: pts.len(),
    })
}
