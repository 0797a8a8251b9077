//! Domain types shared by every part of the crate: the rate kernel, the
//! finite-n configuration, size distributions and generating functions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coalescence rates `alpha(k)` for `k >= 2` together with the shattering
/// fragmentation rate `lambda`.
///
/// Only strictly positive rates are stored, so the support is exactly the
/// set of merge orders that can fire. `m` is the smallest of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct RateKernel {
    alpha: BTreeMap<usize, f64>,
    lambda: f64,
    m: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRepr {
    lambda: f64,
    alpha: BTreeMap<String, f64>,
}

impl TryFrom<KernelRepr> for RateKernel {
    type Error = Error;

    fn try_from(repr: KernelRepr) -> Result<Self> {
        let mut alpha = Vec::with_capacity(repr.alpha.len());
        for (key, value) in repr.alpha {
            if key.is_empty() || !key.bytes().all(|b| b.is_ascii_digit()) || key.starts_with('0') {
                return Err(Error::config(format!(
                    "alpha key {key:?} is not a decimal integer"
                )));
            }
            let k: usize = key
                .parse()
                .map_err(|_| Error::config(format!("alpha key {key:?} out of range")))?;
            alpha.push((k, value));
        }
        RateKernel::new(alpha, repr.lambda)
    }
}

impl From<RateKernel> for KernelRepr {
    fn from(kernel: RateKernel) -> Self {
        KernelRepr {
            lambda: kernel.lambda,
            alpha: kernel
                .alpha
                .iter()
                .map(|(k, a)| (k.to_string(), *a))
                .collect(),
        }
    }
}

impl RateKernel {
    pub fn new(alpha: impl IntoIterator<Item = (usize, f64)>, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut map = BTreeMap::new();
        for (k, a) in alpha {
            if k < 2 {
                return Err(Error::config(format!("alpha key {k} < 2")));
            }
            if !a.is_finite() || a < 0.0 {
                return Err(Error::config(format!(
                    "alpha({k}) must be finite and >= 0, got {a}"
                )));
            }
            if map.insert(k, a).is_some() {
                return Err(Error::config(format!("alpha key {k} given twice")));
            }
        }
        map.retain(|_, a| *a > 0.0);
        let m = match map.keys().next() {
            Some(&m) => m,
            None => return Err(Error::config("alpha must have at least one positive entry")),
        };
        Ok(RateKernel {
            alpha: map,
            lambda,
            m,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Smallest merge order with a positive rate.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Largest merge order with a positive rate.
    pub fn k_max(&self) -> usize {
        *self
            .alpha
            .keys()
            .next_back()
            .expect("kernel support is non-empty")
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alpha.get(&k).copied().unwrap_or(0.0)
    }

    /// `(k, alpha(k))` over the support, increasing in `k`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.alpha.iter().map(|(&k, &a)| (k, a))
    }

    /// `(k, alpha(k) / k!)` over the support.
    pub fn merge_coefficients(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support().map(|(k, a)| (k, a / factorial(k)))
    }

    /// Same rates, different fragmentation rate.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        RateKernel::new(self.support(), lambda)
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (2..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Checks the growth condition `alpha(k) <= C exp(gamma k ln ln k)` for
/// every supported `k >= k_check`, plus finiteness of `alpha(2)`, `alpha(3)`.
///
/// The comparison is done in log space so factorial-sized rates do not
/// overflow.
pub fn kernel_admissible(kernel: &RateKernel, c: f64, gamma: f64, k_check: usize) -> Result<bool> {
    if !(gamma < 1.0) {
        return Err(Error::domain(format!("gamma must be < 1, got {gamma}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!(
            "C must be positive and finite, got {c}"
        )));
    }
    if k_check < 3 {
        return Err(Error::domain(format!(
            "k_check must be >= 3, got {k_check}"
        )));
    }
    if !kernel.alpha(2).is_finite() || !kernel.alpha(3).is_finite() {
        return Ok(false);
    }
    let ln_c = c.ln();
    Ok(kernel
        .support()
        .filter(|&(k, _)| k >= k_check)
        .all(|(k, a)| {
            let kf = k as f64;
            a.ln() <= ln_c + gamma * kf * kf.ln().ln()
        }))
}

/// Exact finite-n configuration: a multiset of cluster sizes summing to `n`.
///
/// Singletons are indistinguishable, so they are kept as a count; clusters of
/// size two or more live in `multi` in no particular order. `histogram[k]` is
/// the number of clusters of size `k` (index 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    n: u64,
    singletons: u64,
    multi: Vec<u64>,
    histogram: Vec<u64>,
    t: f64,
}

impl SystemState {
    /// `n` singleton clusters at time zero.
    pub fn singletons(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("n must be >= 1"));
        }
        let mut histogram = vec![0; n as usize + 1];
        histogram[1] = n;
        Ok(SystemState {
            n,
            singletons: n,
            multi: Vec::new(),
            histogram,
            t: 0.0,
        })
    }

    /// Builds a state from an explicit list of cluster sizes; `n` is their sum.
    pub fn from_sizes(sizes: &[u64]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::domain("a state needs at least one cluster"));
        }
        if sizes.contains(&0) {
            return Err(Error::domain("cluster sizes must be positive"));
        }
        let n: u64 = sizes.iter().sum();
        let mut histogram = vec![0; n as usize + 1];
        let mut singletons = 0;
        let mut multi = Vec::new();
        for &s in sizes {
            histogram[s as usize] += 1;
            if s == 1 {
                singletons += 1;
            } else {
                multi.push(s);
            }
        }
        Ok(SystemState {
            n,
            singletons,
            multi,
            histogram,
            t: 0.0,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub fn cluster_count(&self) -> u64 {
        self.singletons + self.multi.len() as u64
    }

    pub fn singleton_count(&self) -> u64 {
        self.singletons
    }

    /// Number of clusters of size `k`.
    pub fn count(&self, k: usize) -> u64 {
        self.histogram.get(k).copied().unwrap_or(0)
    }

    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }

    /// Non-singleton clusters, in storage order.
    pub fn multi(&self) -> &[u64] {
        &self.multi
    }

    /// Every cluster size, singletons first.
    pub fn clusters(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::repeat(1)
            .take(self.singletons as usize)
            .chain(self.multi.iter().copied())
    }

    pub fn max_size(&self) -> u64 {
        self.multi.iter().copied().max().unwrap_or(1)
    }

    /// `(size, count)` for every size present, increasing in size.
    pub fn sparse_histogram(&self) -> Vec<(u64, u64)> {
        let top = self.max_size() as usize;
        self.histogram[..=top]
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(k, &c)| (k as u64, c))
            .collect()
    }

    /// Rebuilds the histogram from the clusters and compares; also checks mass.
    pub fn validate(&self) -> Result<()> {
        let mass: u64 = self.singletons + self.multi.iter().sum::<u64>();
        if mass != self.n {
            return Err(Error::domain(format!("mass {mass} != n {}", self.n)));
        }
        if self.multi.iter().any(|&s| s < 2) {
            return Err(Error::domain("non-singleton store holds a singleton"));
        }
        let mut rebuilt = vec![0u64; self.n as usize + 1];
        rebuilt[1] = self.singletons;
        for &s in &self.multi {
            rebuilt[s as usize] += 1;
        }
        if rebuilt != self.histogram {
            return Err(Error::domain("histogram does not match cluster list"));
        }
        let b = self.cluster_count();
        if b == 0 || b > self.n {
            return Err(Error::domain(format!("cluster count {b} outside [1, n]")));
        }
        Ok(())
    }

    pub(crate) fn take_singleton(&mut self) {
        debug_assert!(self.singletons > 0);
        self.singletons -= 1;
        self.histogram[1] -= 1;
    }

    /// Removes the non-singleton at `idx` (swap-remove) and returns its size.
    pub(crate) fn take_multi(&mut self, idx: usize) -> u64 {
        let s = self.multi.swap_remove(idx);
        self.histogram[s as usize] -= 1;
        s
    }

    /// Inserts a new cluster of size `s >= 2`.
    pub(crate) fn insert_multi(&mut self, s: u64) {
        debug_assert!(s >= 2);
        self.multi.push(s);
        self.histogram[s as usize] += 1;
    }

    pub(crate) fn add_singletons(&mut self, count: u64) {
        self.singletons += count;
        self.histogram[1] += count;
    }
}

/// A probability vector over cluster sizes, indexed from `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    /// `p[k]` for `k = 0..=K`; `p[0]` is always zero.
    p: Vec<f64>,
    /// Estimated mass beyond the truncation `K`.
    pub tail_mass_estimate: f64,
}

impl SizeDistribution {
    /// Wraps `p_1..p_K` given in order (the vector is shifted so `p[k]` is size `k`).
    pub fn from_sizes(values: impl IntoIterator<Item = f64>) -> Self {
        let mut p = vec![0.0];
        p.extend(values);
        SizeDistribution {
            p,
            tail_mass_estimate: 0.0,
        }
    }

    pub(crate) fn from_indexed(p: Vec<f64>, tail_mass_estimate: f64) -> Self {
        debug_assert!(!p.is_empty() && p[0] == 0.0);
        SizeDistribution {
            p,
            tail_mass_estimate,
        }
    }

    /// Largest represented size.
    pub fn truncation(&self) -> usize {
        self.p.len() - 1
    }

    /// `p_k`, zero outside `1..=K`.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.p.get(k).copied().unwrap_or(0.0)
        }
    }

    /// `(k, p_k)` for `k = 1..=K`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.p.iter().copied().enumerate().skip(1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Values of a generating function on a grid of `x` in `[0, 1]` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingFunctionGrid {
    pub x_points: Vec<f64>,
    pub values: Vec<f64>,
    pub t: f64,
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::domain(format!("x = {x} outside [0, 1]")))
    }
}

/// `G_n(x) = sum_k x^k w_{n,k}` with `w_{n,k} = count_k / n`.
pub fn empirical_g(state: &SystemState, x: f64) -> Result<f64> {
    check_unit(x)?;
    let mut acc = state.singleton_count() as f64 * x;
    for &s in state.multi() {
        acc += pow_u64(x, s);
    }
    Ok(acc / state.n() as f64)
}

/// `G_n` on a whole grid.
pub fn empirical_g_grid(state: &SystemState, xs: &[f64]) -> Result<GeneratingFunctionGrid> {
    let values = xs
        .iter()
        .map(|&x| empirical_g(state, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneratingFunctionGrid {
        x_points: xs.to_vec(),
        values,
        t: state.time(),
    })
}

fn pow_u64(x: f64, e: u64) -> f64 {
    if e <= i32::MAX as u64 {
        x.powi(e as i32)
    } else {
        x.powf(e as f64)
    }
}

/// Fraction of clusters having each size.
pub fn empirical_p(state: &SystemState) -> SizeDistribution {
    let b = state.cluster_count() as f64;
    let top = state.max_size() as usize;
    let mut p: Vec<f64> = state.histogram()[..=top]
        .iter()
        .map(|&c| c as f64 / b)
        .collect();
    p[0] = 0.0;
    SizeDistribution::from_indexed(p, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair() -> RateKernel {
        RateKernel::new([(2, 1.0)], 1.0).unwrap()
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(RateKernel::new([(1, 1.0)], 1.0).is_err());
        assert!(RateKernel::new([(2, 1.0)], -0.1).is_err());
        assert!(RateKernel::new([(2, 0.0)], 0.1).is_err());
        assert!(RateKernel::new(Vec::<(usize, f64)>::new(), 0.1).is_err());
        assert!(RateKernel::new([(2, f64::NAN)], 0.1).is_err());
    }

    #[test]
    fn kernel_m_skips_zero_rates() {
        let k = RateKernel::new([(2, 0.0), (3, 1.0), (4, 2.0)], 0.0).unwrap();
        assert_eq!(k.m(), 3);
        assert_eq!(k.k_max(), 4);
        assert_eq!(k.alpha(2), 0.0);
    }

    #[test]
    fn kernel_json() {
        let k: RateKernel =
            serde_json::from_str(r#"{"lambda": 0.5, "alpha": {"3": 1, "4": 2}}"#).unwrap();
        assert_eq!(k.m(), 3);
        assert_eq!(k.lambda(), 0.5);
        let back: RateKernel = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);

        for bad in [
            r#"{"lambda": 0.5, "alpha": {"1": 1}}"#,
            r#"{"lambda": 0.5, "alpha": {"x": 1}}"#,
            r#"{"lambda": 0.5, "alpha": {"02": 1}}"#,
            r#"{"lambda": 0.5, "alpha": {}}"#,
            r#"{"lambda": -1, "alpha": {"2": 1}}"#,
            r#"{"lambda": 0.5, "alpha": {"2": 1}, "extra": 0}"#,
        ] {
            assert!(serde_json::from_str::<RateKernel>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn admissibility() {
        assert!(kernel_admissible(&pair(), 1.0, 0.5, 3).unwrap());
        assert!(kernel_admissible(&pair(), 1.0, 1.0, 3).is_err());
        assert!(kernel_admissible(&pair(), 1.0, 0.5, 2).is_err());

        // ln k! against 0.9 k ln ln k, evaluated at every k up to 50.
        let fact = RateKernel::new((2..=50).map(|k| (k, factorial(k))), 1.0).unwrap();
        let violated = (3..=50usize).any(|k| {
            let lnf: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            lnf > 0.9 * k as f64 * (k as f64).ln().ln()
        });
        assert!(violated);
        assert!(!kernel_admissible(&fact, 1.0, 0.9, 3).unwrap());

        let pow2 = RateKernel::new((2..=50).map(|k| (k, 2f64.powi(k as i32))), 1.0).unwrap();
        let holds = (3..=50usize)
            .all(|k| 2f64.powi(k as i32) <= 1e6 * (0.9 * k as f64 * (k as f64).ln().ln()).exp());
        assert!(holds);
        assert!(kernel_admissible(&pow2, 1e6, 0.9, 3).unwrap());
    }

    #[test]
    fn g_examples() {
        let s = SystemState::singletons(4).unwrap();
        assert_eq!(empirical_g(&s, 0.5).unwrap(), 0.5);
        let s = SystemState::from_sizes(&[2, 2]).unwrap();
        assert_eq!(empirical_g(&s, 0.5).unwrap(), 0.125);
        assert_eq!(empirical_g(&s, 1.0).unwrap(), 0.5);
        assert!(empirical_g(&s, 1.5).is_err());
        assert!(empirical_g(&s, -0.1).is_err());
    }

    #[test]
    fn p_examples() {
        let p = empirical_p(&SystemState::from_sizes(&[1, 1, 2]).unwrap());
        assert_eq!(p.get(1), 2.0 / 3.0);
        assert_eq!(p.get(2), 1.0 / 3.0);
        let p = empirical_p(&SystemState::singletons(5).unwrap());
        assert_eq!(p.get(1), 1.0);
        assert_eq!(p.truncation(), 1);
        let p = empirical_p(&SystemState::from_sizes(&[4]).unwrap());
        assert_eq!(p.get(4), 1.0);
        assert_eq!(p.get(1), 0.0);
    }

    #[test]
    fn singletons_init() {
        assert!(SystemState::singletons(0).is_err());
        let s = SystemState::singletons(1).unwrap();
        assert_eq!(s.clusters().collect::<Vec<_>>(), vec![1]);
        let s = SystemState::singletons(4).unwrap();
        assert_eq!(s.sparse_histogram(), vec![(1, 4)]);
        let s = SystemState::singletons(1_000_000).unwrap();
        assert_eq!(s.cluster_count(), 1_000_000);
        assert_eq!(s.clusters().sum::<u64>(), 1_000_000);
        s.validate().unwrap();
    }

    proptest! {
        #[test]
        fn g_monotone_in_x(sizes in prop::collection::vec(1u64..20, 1..30),
                           a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let s = SystemState::from_sizes(&sizes).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(empirical_g(&s, lo).unwrap() <= empirical_g(&s, hi).unwrap());
            prop_assert_eq!(empirical_g(&s, 0.0).unwrap(), 0.0);
            prop_assert_eq!(empirical_g(&s, 1.0).unwrap(),
                            sizes.len() as f64 / s.n() as f64);
        }

        #[test]
        fn p_sums_to_one(sizes in prop::collection::vec(1u64..50, 1..60)) {
            let s = SystemState::from_sizes(&sizes).unwrap();
            prop_assert!((empirical_p(&s).total() - 1.0).abs() <= 1e-12);
        }
    }
}
