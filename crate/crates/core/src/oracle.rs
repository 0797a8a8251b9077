//! Exact continuous-time Markov chain on the integer partitions of a small `n`.
//!
//! States are partitions of `n` (cluster-size multisets). The generator is
//! dense; `n` is capped at 12, where there are 77 partitions.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};
use crate::model::{factorial, RateKernel, SystemState};

/// Largest `n` the oracle accepts.
pub const MAX_ORACLE_N: u32 = 12;

/// A partition of `n`, stored as `(size, multiplicity)` with sizes decreasing
/// and multiplicities positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionState {
    parts: Vec<(u32, u32)>,
}

impl PartitionState {
    /// Canonicalizes an arbitrary list of part sizes.
    pub fn from_parts(sizes: &[u32]) -> Self {
        let mut sorted = sizes.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut parts: Vec<(u32, u32)> = Vec::new();
        for s in sorted {
            match parts.last_mut() {
                Some((size, mult)) if *size == s => *mult += 1,
                _ => parts.push((s, 1)),
            }
        }
        PartitionState { parts }
    }

    pub fn from_state(state: &SystemState) -> Self {
        let mut parts: Vec<(u32, u32)> = state
            .sparse_histogram()
            .into_iter()
            .map(|(k, c)| (k as u32, c as u32))
            .collect();
        parts.reverse();
        PartitionState { parts }
    }

    pub fn parts(&self) -> &[(u32, u32)] {
        &self.parts
    }

    pub fn n(&self) -> u32 {
        self.parts.iter().map(|&(s, c)| s * c).sum()
    }

    pub fn cluster_count(&self) -> u32 {
        self.parts.iter().map(|&(_, c)| c).sum()
    }

    pub fn count(&self, size: u32) -> u32 {
        self.parts
            .iter()
            .find(|&&(s, _)| s == size)
            .map_or(0, |&(_, c)| c)
    }

    fn counts(&self, n: u32) -> Vec<u32> {
        let mut c = vec![0; n as usize + 1];
        for &(s, m) in &self.parts {
            c[s as usize] = m;
        }
        c
    }

    fn from_counts(counts: &[u32]) -> Self {
        let parts = counts
            .iter()
            .enumerate()
            .rev()
            .filter(|&(s, &c)| s > 0 && c > 0)
            .map(|(s, &c)| (s as u32, c))
            .collect();
        PartitionState { parts }
    }

    /// Empirical `G_n(x)` of this configuration.
    pub fn g(&self, x: f64) -> f64 {
        let n = self.n() as f64;
        self.parts
            .iter()
            .map(|&(s, c)| c as f64 * x.powi(s as i32))
            .sum::<f64>()
            / n
    }
}

impl fmt::Display for PartitionState {
    /// `size^multiplicity` tokens, largest size first, e.g. `2^1 1^2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, c)) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}^{c}")?;
        }
        Ok(())
    }
}

/// All partitions of `n` in reverse lexicographic order (`[n]` first,
/// `[1, ..., 1]` last).
pub fn enumerate_states(n: u32) -> Result<Vec<PartitionState>> {
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    if n > MAX_ORACLE_N {
        return Err(Error::domain(format!(
            "exact oracle refuses n = {n} > {MAX_ORACLE_N}"
        )));
    }
    fn rec(remaining: u32, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<PartitionState>) {
        if remaining == 0 {
            out.push(PartitionState::from_parts(prefix));
            return;
        }
        for part in (1..=remaining.min(max_part)).rev() {
            prefix.push(part);
            rec(remaining - part, part, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    pub n: u32,
    pub lambda: f64,
    pub states: Vec<PartitionState>,
    /// `q[(i, j)]`: jump rate from `states[i]` to `states[j]`; rows sum to zero.
    pub q: DMatrix<f64>,
    index: HashMap<PartitionState, usize>,
}

impl GeneratorMatrix {
    fn empty(n: u32, lambda: f64) -> Result<Self> {
        let states = enumerate_states(n)?;
        let index = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let d = states.len();
        Ok(GeneratorMatrix {
            n,
            lambda,
            states,
            q: DMatrix::zeros(d, d),
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &PartitionState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Index of the all-singletons state (always last).
    pub fn singletons_index(&self) -> usize {
        self.states.len() - 1
    }

    fn add_rate(&mut self, from: usize, to_counts: &[u32], rate: f64) {
        let to = self.index[&PartitionState::from_counts(to_counts)];
        if to != from {
            self.q[(from, to)] += rate;
        }
    }

    fn fill_diagonal(&mut self) {
        for i in 0..self.dim() {
            self.q[(i, i)] = 0.0;
            let out: f64 = self.q.row(i).iter().sum();
            self.q[(i, i)] = -out;
        }
    }

    /// Largest `|row sum|`.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.q.row(i).iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn falling(x: u32, k: u32) -> f64 {
    if k > x {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (x - i) as f64)
}

/// Generator from subset counting: a multiset taking `a_s` clusters of each
/// size `s` (with `sum a_s = k`) merges at `alpha(k) n^(1-k) prod_s C(c_s, a_s)`,
/// and each size-`s >= 2` cluster shatters at rate `lambda`.
pub fn build_generator(n: u32, kernel: &RateKernel) -> Result<GeneratorMatrix> {
    let mut gen = GeneratorMatrix::empty(n, kernel.lambda())?;
    let nf = n as f64;
    for i in 0..gen.dim() {
        let counts = gen.states[i].counts(n);
        let sizes: Vec<u32> = (1..=n).filter(|&s| counts[s as usize] > 0).collect();
        for (k, alpha) in kernel.support() {
            if k as u32 > gen.states[i].cluster_count() {
                continue;
            }
            let base = alpha * nf.powi(1 - k as i32);
            let mut take = vec![0u32; sizes.len()];
            let mut targets = Vec::new();
            choose_multisets(&sizes, &counts, k as u32, 0, &mut take, &mut targets);
            for take in targets {
                let mut to = counts.clone();
                let mut merged = 0;
                let mut ways = 1.0;
                for (&s, &a) in sizes.iter().zip(&take) {
                    to[s as usize] -= a;
                    merged += s * a;
                    ways *= binom(counts[s as usize], a);
                }
                to[merged as usize] += 1;
                gen.add_rate(i, &to, base * ways);
            }
        }
        for &s in sizes.iter().filter(|&&s| s >= 2) {
            let mut to = counts.clone();
            to[s as usize] -= 1;
            to[1] += s;
            gen.add_rate(i, &to, kernel.lambda() * counts[s as usize] as f64);
        }
    }
    gen.fill_diagonal();
    Ok(gen)
}

fn choose_multisets(
    sizes: &[u32],
    counts: &[u32],
    remaining: u32,
    pos: usize,
    take: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
) {
    if remaining == 0 {
        out.push(take.clone());
        return;
    }
    if pos == sizes.len() {
        return;
    }
    let avail = counts[sizes[pos] as usize];
    for a in (0..=avail.min(remaining)).rev() {
        take[pos] = a;
        choose_multisets(sizes, counts, remaining - a, pos + 1, take, out);
    }
    take[pos] = 0;
}

/// Set partitions of `{0..k}` as block sizes, via restricted growth strings.
fn set_partition_block_sizes(k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut rgs = vec![0usize; k];
    fn rec(i: usize, max: usize, rgs: &mut Vec<usize>, out: &mut Vec<Vec<u32>>) {
        if i == rgs.len() {
            let blocks = rgs.iter().max().map_or(0, |m| m + 1);
            let mut sizes = vec![0u32; blocks];
            for &b in rgs.iter() {
                sizes[b] += 1;
            }
            out.push(sizes);
            return;
        }
        for b in 0..=max + 1 {
            rgs[i] = b;
            rec(i + 1, max.max(b), rgs, out);
        }
    }
    if k == 0 {
        return out;
    }
    rgs[0] = 0;
    rec(1, 0, &mut rgs, &mut out);
    out
}

/// Generator from the ordered-tuple form: for each `k`, sum over set
/// partitions `pi` of `{1..k}` and over block sizes `l_i`, with weight
/// `alpha(k)/(k! n^(k-1)) prod_i (c_{l_i})_{|pi_i|}` (falling factorials).
///
/// A set partition records which tuple positions share a size, so sizes of
/// different blocks are required to be distinct; otherwise the same ordered
/// tuple would be counted under several partitions. Singleton self-loops from
/// fragmentation are dropped.
///
/// Kept as an independent route for cross-checking [`build_generator`].
pub fn build_generator_from_tuples(n: u32, kernel: &RateKernel) -> Result<GeneratorMatrix> {
    let mut gen = GeneratorMatrix::empty(n, kernel.lambda())?;
    let nf = n as f64;
    for i in 0..gen.dim() {
        let counts = gen.states[i].counts(n);
        for (k, alpha) in kernel.support() {
            if k as u32 > n {
                continue;
            }
            let prefactor = alpha / (factorial(k) * nf.powi(k as i32 - 1));
            for blocks in set_partition_block_sizes(k) {
                let mut labels = vec![0u32; blocks.len()];
                assign_sizes(n, &blocks, &counts, 0, &mut labels, &mut |labels| {
                    let mut weight = 1.0;
                    let mut to = counts.clone();
                    let mut merged = 0;
                    for (&b, &l) in blocks.iter().zip(labels) {
                        weight *= falling(counts[l as usize], b);
                        if weight == 0.0 {
                            return None;
                        }
                        to[l as usize] -= b;
                        merged += b * l;
                    }
                    to[merged as usize] += 1;
                    Some((to, prefactor * weight))
                })
                .into_iter()
                .for_each(|(to, rate)| gen.add_rate(i, &to, rate));
            }
        }
        for s in 2..=n {
            let c = counts[s as usize];
            if c > 0 {
                let mut to = counts.clone();
                to[s as usize] -= 1;
                to[1] += s;
                gen.add_rate(i, &to, kernel.lambda() * nf * (c as f64 / nf));
            }
        }
    }
    gen.fill_diagonal();
    Ok(gen)
}

fn assign_sizes<F>(
    n: u32,
    blocks: &[u32],
    counts: &[u32],
    pos: usize,
    labels: &mut Vec<u32>,
    visit: &mut F,
) -> Vec<(Vec<u32>, f64)>
where
    F: FnMut(&[u32]) -> Option<(Vec<u32>, f64)>,
{
    let mut out = Vec::new();
    if pos == blocks.len() {
        if let Some(hit) = visit(labels) {
            out.push(hit);
        }
        return out;
    }
    for l in 1..=n {
        if counts[l as usize] == 0 || labels[..pos].contains(&l) {
            continue;
        }
        labels[pos] = l;
        out.extend(assign_sizes(n, blocks, counts, pos + 1, labels, visit));
    }
    out
}

fn point_mass(dim: usize, init: usize) -> RowDVector<f64> {
    let mut v = RowDVector::zeros(dim);
    v[init] = 1.0;
    v
}

/// `e_init exp(tQ)` by uniformization.
///
/// The horizon is cut into pieces with `Lambda * tau <= 20` (`Lambda` the
/// largest exit rate) and each piece sums the Poisson mixture until the
/// neglected tail is below `1e-10` divided by the number of pieces.
pub fn transient_distribution(gen: &GeneratorMatrix, init: usize, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
    }
    if init >= gen.dim() {
        return Err(Error::domain("initial state index out of range"));
    }
    let dim = gen.dim();
    let mut v = point_mass(dim, init);
    let rate = (0..dim).map(|i| -gen.q[(i, i)]).fold(0.0, f64::max);
    if t == 0.0 || rate == 0.0 {
        return Ok(v.iter().copied().collect());
    }
    let pieces = (rate * t / 20.0).ceil().max(1.0);
    let tau = t / pieces;
    let eps = 1e-10 / pieces;
    let jump = DMatrix::identity(dim, dim) + &gen.q / rate;
    let a = rate * tau;
    for _ in 0..pieces as u64 {
        let mut weight = (-a).exp();
        let mut cumulative = weight;
        let mut term = v.clone();
        let mut acc = &term * weight;
        let mut j = 0u64;
        while 1.0 - cumulative > eps {
            j += 1;
            term = &term * &jump;
            weight *= a / j as f64;
            cumulative += weight;
            acc += &term * weight;
            if j > 10_000 {
                return Err(Error::Numerical {
                    t,
                    reason: "uniformization did not converge".into(),
                });
            }
        }
        v = acc;
    }
    Ok(v.iter().copied().collect())
}

/// `e_init exp(tQ)` through nalgebra's scaling-and-squaring Padé exponential.
pub fn transient_by_expm(gen: &GeneratorMatrix, init: usize, t: f64) -> Vec<f64> {
    let p = (&gen.q * t).exp();
    p.row(init).iter().copied().collect()
}

/// Solves `pi Q = 0`, `sum pi = 1`.
///
/// One equation of `pi Q = 0` is redundant (rows of `Q` sum to zero) and is
/// replaced by the normalization; one round of iterative refinement follows.
/// Fragmentation leads every state to the all-singletons state, so for
/// `lambda > 0` there is a single closed class and the system is nonsingular.
pub fn stationary_distribution(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    if !(gen.lambda > 0.0) {
        return Err(Error::NoStationaryLaw);
    }
    let dim = gen.dim();
    let mut a = gen.q.transpose();
    for j in 0..dim {
        a[(0, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(dim);
    rhs[0] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu.solve(&rhs).ok_or_else(|| Error::Numerical {
        t: 0.0,
        reason: "singular stationary system".into(),
    })?;
    let resid = &rhs - &a * &pi;
    if let Some(corr) = lu.solve(&resid) {
        pi += corr;
    }
    let mut pi: Vec<f64> = pi
        .iter()
        .map(|&p| if p < 0.0 && p > -1e-14 { 0.0 } else { p })
        .collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// `max_j |(pi Q)_j|`.
pub fn stationary_residual(gen: &GeneratorMatrix, pi: &[f64]) -> f64 {
    let row = RowDVector::from_row_slice(pi) * &gen.q;
    row.iter().fold(0.0, |m, v| m.max(v.abs()))
}
