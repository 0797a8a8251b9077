//! Exact event-driven simulation of the finite-n process.
//!
//! With `b` clusters present, every `k`-subset merges at rate
//! `alpha(k) n^(1-k)`, so the total `k`-merge rate is `alpha(k) n^(1-k) C(b, k)`.
//! Every non-singleton shatters into singletons at rate `lambda`. Rates depend
//! only on `b` and the singleton count, so they are recomputed each step in
//! `O(|support|)` and no rate tree is needed.
//!
//! Singleton fragmentation would leave the state unchanged and is not part of
//! the event space.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    empirical_g_grid, empirical_p, GeneratingFunctionGrid, RateKernel, SizeDistribution,
    SystemState,
};

/// Generator used for every simulation run.
pub type SimRng = ChaCha8Rng;

/// Seed of replica `r` in an ensemble started from `base_seed`.
///
/// `base_seed + r` is passed through SplitMix64 so neighbouring replicas get
/// uncorrelated ChaCha keys.
pub fn replica_seed(base_seed: u64, replica: u64) -> u64 {
    let mut z = base_seed
        .wrapping_add(replica)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: u64,
    pub kernel: RateKernel,
    pub t_max: f64,
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "record_G_at", default)]
    pub record_g_at: Vec<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be >= 1"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::config("t_max must be positive and finite"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_max) {
            return Err(Error::config("burn_in must satisfy 0 <= burn_in < t_max"));
        }
        if self.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("snapshot_times must be sorted"));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&s| !(0.0..=self.t_max).contains(&s))
        {
            return Err(Error::config("snapshot_times must lie in [0, t_max]"));
        }
        if self.record_g_at.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::config("record_G_at values must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Total rates of every event class in the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRates {
    /// `lambda` times the number of non-singleton clusters.
    pub frag_rate: f64,
    /// `(k, total k-merge rate)` over the kernel support.
    pub merge_rate: Vec<(usize, f64)>,
    pub total: f64,
}

impl EventRates {
    pub fn merge(&self, k: usize) -> f64 {
        self.merge_rate
            .iter()
            .find(|&&(j, _)| j == k)
            .map_or(0.0, |&(_, r)| r)
    }
}

/// `(alpha(k)/k!) n prod_{i<k} (b-i)/n`: the falling factorial is built from
/// factors in `[0, 1]` so nothing overflows for large `n` and `k`.
fn merge_rate(coef: f64, k: usize, b: u64, n: u64) -> f64 {
    if (k as u64) > b {
        return 0.0;
    }
    let nf = n as f64;
    let mut r = coef * nf;
    for i in 0..k as u64 {
        r *= (b - i) as f64 / nf;
    }
    r
}

pub fn compute_event_rates(state: &SystemState, kernel: &RateKernel) -> EventRates {
    let b = state.cluster_count();
    let n = state.n();
    let frag_rate = kernel.lambda() * (b - state.singleton_count()) as f64;
    let merge_rate: Vec<(usize, f64)> = kernel
        .merge_coefficients()
        .map(|(k, c)| (k, merge_rate(c, k, b, n)))
        .collect();
    let total = frag_rate + merge_rate.iter().map(|&(_, r)| r).sum::<f64>();
    EventRates {
        frag_rate,
        merge_rate,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// `k` clusters merged into one.
    Merge { k: usize },
    /// A cluster shattered into singletons.
    Fragment,
}

/// One jump of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub kind: EventKind,
    /// Holding time before the jump.
    pub dt: f64,
    /// Sizes of the clusters consumed by the event.
    pub sizes: Vec<u64>,
    /// Size of the cluster created by a merge; 1 for fragmentation.
    pub result: u64,
}

/// Returned by [`step`] when no event can fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Absorbed;

/// Precomputed `alpha(k)/k!` and `lambda`, so the hot loop does not touch the
/// kernel's map.
#[derive(Debug, Clone)]
struct RateTable {
    coefs: Vec<(usize, f64)>,
    lambda: f64,
    rates: Vec<f64>,
}

impl RateTable {
    fn new(kernel: &RateKernel) -> Self {
        let coefs: Vec<_> = kernel.merge_coefficients().collect();
        let rates = vec![0.0; coefs.len()];
        RateTable {
            coefs,
            lambda: kernel.lambda(),
            rates,
        }
    }

    /// Fills the merge rates and returns `(frag_rate, total)`.
    fn refresh(&mut self, state: &SystemState) -> (f64, f64) {
        let b = state.cluster_count();
        let n = state.n();
        let frag = self.lambda * (b - state.singleton_count()) as f64;
        let mut total = frag;
        for (slot, &(k, c)) in self.rates.iter_mut().zip(&self.coefs) {
            *slot = merge_rate(c, k, b, n);
            total += *slot;
        }
        (frag, total)
    }
}

/// Draws the event class with the rates in `table` and applies it. `parts`
/// receives the consumed cluster sizes. Returns the event kind and the index
/// of the merge order in the table (unused for fragmentation).
fn apply_event<R: Rng>(
    state: &mut SystemState,
    table: &RateTable,
    frag: f64,
    total: f64,
    rng: &mut R,
    parts: &mut Vec<u64>,
) -> (EventKind, usize, u64) {
    parts.clear();
    let u = rng.gen::<f64>() * total;
    let chosen = if u < frag {
        None
    } else {
        let mut u = u - frag;
        let mut pick = None;
        for (i, &r) in table.rates.iter().enumerate() {
            if r > 0.0 {
                pick = Some(i);
                if u < r {
                    break;
                }
                u -= r;
            }
        }
        pick
    };

    match chosen {
        None => {
            let m = state.multi().len();
            let idx = rng.gen_range(0..m);
            let s = state.take_multi(idx);
            state.add_singletons(s);
            parts.push(s);
            (EventKind::Fragment, 0, 1)
        }
        Some(i) => {
            let k = table.coefs[i].0;
            // Sequential uniform draws without replacement. Singletons are
            // interchangeable, so an index below the singleton count takes
            // one of them, otherwise the matching non-singleton is
            // swap-removed.
            let mut merged = 0;
            for _ in 0..k {
                let ones = state.singleton_count();
                let b = ones + state.multi().len() as u64;
                let r = rng.gen_range(0..b);
                let s = if r < ones {
                    state.take_singleton();
                    1
                } else {
                    state.take_multi((r - ones) as usize)
                };
                parts.push(s);
                merged += s;
            }
            state.insert_multi(merged);
            (EventKind::Merge { k }, i, merged)
        }
    }
}

/// Advances the state by one jump.
///
/// The holding time is exponential with the total rate; the event class is
/// drawn in proportion to its rate; a `k`-merge picks a uniform `k`-subset of
/// clusters; fragmentation picks a uniform non-singleton.
pub fn step<R: Rng>(
    state: &mut SystemState,
    kernel: &RateKernel,
    rng: &mut R,
) -> Result<EventRecord, Absorbed> {
    let mut table = RateTable::new(kernel);
    let (frag, total) = table.refresh(state);
    if !(total > 0.0) {
        return Err(Absorbed);
    }
    let dt = rng.sample::<f64, _>(Exp1) / total;
    let mut parts = Vec::new();
    let (kind, _, result) = apply_event(state, &table, frag, total, rng, &mut parts);
    state.set_time(state.time() + dt);
    Ok(EventRecord {
        kind,
        dt,
        sizes: parts,
        result,
    })
}

/// State of the process at a requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub p: SizeDistribution,
    pub g: GeneratingFunctionGrid,
    /// `(size, count)` pairs.
    pub histogram: Vec<(u64, u64)>,
    pub cluster_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub snapshots: Vec<Snapshot>,
    /// Cluster-size distribution averaged over `[burn_in, t_max]` with
    /// holding-time weights.
    pub time_averaged_p: SizeDistribution,
    /// Sum of the clipped holding times; equals `t_max - burn_in`.
    pub sojourn_total: f64,
    pub event_counts: BTreeMap<String, u64>,
    /// Time at which the chain got stuck, if it did.
    pub absorbed_at: Option<f64>,
    pub final_cluster_count: u64,
}

impl TrajectoryRecord {
    pub fn truncated(&self) -> bool {
        self.absorbed_at.is_some()
    }

    pub fn total_events(&self) -> u64 {
        self.event_counts.values().sum()
    }
}

/// Holding-time-weighted average of `count_k / b` over `[burn_in, t_max]`.
///
/// With `H(t) = int 1/b ds` over the window, integration by parts gives
/// `int count_k dH = count_k(T) H(T) - sum_jumps delta_k H(t_jump)`, so only
/// the sizes touched by a jump need updating.
struct TimeAverage {
    burn_in: f64,
    t_max: f64,
    h: f64,
    weight: f64,
    correction: Vec<f64>,
}

impl TimeAverage {
    fn new(n: u64, burn_in: f64, t_max: f64) -> Self {
        TimeAverage {
            burn_in,
            t_max,
            h: 0.0,
            weight: 0.0,
            correction: vec![0.0; n as usize + 1],
        }
    }

    fn hold(&mut self, from: f64, to: f64, b: u64) {
        let lo = from.max(self.burn_in);
        let hi = to.min(self.t_max);
        if hi > lo {
            self.h += (hi - lo) / b as f64;
            self.weight += hi - lo;
        }
    }

    #[inline]
    fn change(&mut self, k: u64, delta: f64) {
        if self.h != 0.0 {
            self.correction[k as usize] -= delta * self.h;
        }
    }

    fn finish(self, state: &SystemState) -> (SizeDistribution, f64) {
        let hist = state.histogram();
        let mut p: Vec<f64> = hist
            .iter()
            .zip(&self.correction)
            .map(|(&c, &corr)| ((c as f64 * self.h + corr) / self.weight).max(0.0))
            .collect();
        p[0] = 0.0;
        let top = p.iter().rposition(|&v| v > 0.0).unwrap_or(1).max(1);
        p.truncate(top + 1);
        (SizeDistribution::from_indexed(p, 0.0), self.weight)
    }
}

fn snapshot(state: &SystemState, t: f64, xs: &[f64]) -> Snapshot {
    let mut g = empirical_g_grid(state, xs).expect("grid validated with the config");
    g.t = t;
    Snapshot {
        t,
        p: empirical_p(state),
        g,
        histogram: state.sparse_histogram(),
        cluster_count: state.cluster_count(),
    }
}

/// Simulates one trajectory from `n` singletons up to `t_max`.
///
/// Deterministic given the config (including its seed).
pub fn run(config: &SimConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    run_with_rng(config, &mut rng)
}

fn run_with_rng<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<TrajectoryRecord> {
    let mut state = SystemState::singletons(config.n)?;
    let mut table = RateTable::new(&config.kernel);
    let mut avg = TimeAverage::new(config.n, config.burn_in, config.t_max);
    let mut parts = Vec::new();
    let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
    let mut pending = config.snapshot_times.iter().copied().peekable();
    let mut frag_count = 0u64;
    let mut merge_counts = vec![0u64; table.coefs.len()];
    let mut absorbed_at = None;
    let mut t = 0.0;

    loop {
        let (frag, total) = table.refresh(&state);
        if !(total > 0.0) {
            absorbed_at = Some(t);
            avg.hold(t, config.t_max, state.cluster_count());
            for s in pending.by_ref() {
                snapshots.push(snapshot(&state, s, &config.record_g_at));
            }
            break;
        }
        let dt = rng.sample::<f64, _>(Exp1) / total;
        let t_next = t + dt;
        while let Some(&s) = pending.peek() {
            if s > t_next {
                break;
            }
            snapshots.push(snapshot(&state, s, &config.record_g_at));
            pending.next();
        }
        if t_next > config.t_max {
            avg.hold(t, config.t_max, state.cluster_count());
            break;
        }
        avg.hold(t, t_next, state.cluster_count());
        t = t_next;
        let (kind, idx, result) = apply_event(&mut state, &table, frag, total, rng, &mut parts);
        match kind {
            EventKind::Fragment => {
                frag_count += 1;
                avg.change(parts[0], -1.0);
                avg.change(1, parts[0] as f64);
            }
            EventKind::Merge { .. } => {
                merge_counts[idx] += 1;
                for &s in &parts {
                    avg.change(s, -1.0);
                }
                avg.change(result, 1.0);
            }
        }
    }
    state.set_time(t);

    let mut event_counts = BTreeMap::new();
    event_counts.insert("fragment".to_string(), frag_count);
    for (&(k, _), &c) in table.coefs.iter().zip(&merge_counts) {
        event_counts.insert(format!("merge_{k}"), c);
    }
    let final_cluster_count = state.cluster_count();
    let (time_averaged_p, sojourn_total) = avg.finish(&state);
    Ok(TrajectoryRecord {
        snapshots,
        time_averaged_p,
        sojourn_total,
        event_counts,
        absorbed_at,
        final_cluster_count,
    })
}

/// Streaming mean and variance (Welford), merged in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for a single sample.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean; `NaN` below two samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Mean and variance of `G_n(x, t)` across replicas at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GStat {
    pub t: f64,
    pub x: f64,
    pub stats: RunningStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub records: Vec<TrajectoryRecord>,
    /// Snapshot-major, then `x` in `record_G_at` order.
    pub g_stats: Vec<GStat>,
}

/// Runs `replicas` independent trajectories. Replica `r` is seeded with
/// [`replica_seed`]`(base_seed, r)`; the config's own seed is ignored.
///
/// Replicas run on the current rayon pool; statistics are folded in replica
/// order, so the result does not depend on the thread count.
pub fn ensemble(config: &SimConfig, replicas: usize, base_seed: u64) -> Result<EnsembleResult> {
    if replicas == 0 {
        return Err(Error::config("replicas must be >= 1"));
    }
    config.validate()?;
    let records = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(replica_seed(base_seed, r));
            run_with_rng(config, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut g_stats: Vec<GStat> = config
        .snapshot_times
        .iter()
        .flat_map(|&t| {
            config.record_g_at.iter().map(move |&x| GStat {
                t,
                x,
                stats: RunningStats::default(),
            })
        })
        .collect();
    for rec in &records {
        let values = rec
            .snapshots
            .iter()
            .flat_map(|s| s.g.values.iter().copied());
        for (stat, v) in g_stats.iter_mut().zip(values) {
            stat.stats.push(v);
        }
    }
    Ok(EnsembleResult { records, g_stats })
}

/// Fraction of `[burn_in, t_max]` spent in each configuration, keyed by the
/// sparse `(size, count)` histogram. Intended for small `n`.
pub fn state_occupancy(config: &SimConfig) -> Result<BTreeMap<Vec<(u64, u64)>, f64>> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut state = SystemState::singletons(config.n)?;
    let mut occupancy: BTreeMap<Vec<(u64, u64)>, f64> = BTreeMap::new();
    let mut t = 0.0;
    loop {
        let key = state.sparse_histogram();
        let t_next = match step(&mut state, &config.kernel, &mut rng) {
            Ok(ev) => t + ev.dt,
            Err(Absorbed) => f64::INFINITY,
        };
        let lo = t.max(config.burn_in);
        let hi = t_next.min(config.t_max);
        if hi > lo {
            *occupancy.entry(key).or_default() += hi - lo;
        }
        if t_next >= config.t_max {
            break;
        }
        t = t_next;
    }
    let total = config.t_max - config.burn_in;
    for v in occupancy.values_mut() {
        *v /= total;
    }
    Ok(occupancy)
}
