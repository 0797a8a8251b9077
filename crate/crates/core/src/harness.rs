//! Experiment orchestration behind the command-line tool.
//!
//! Every experiment kind reads a JSON parameter object with a fixed schema
//! (unknown keys are rejected), validates it, computes, and writes its CSV and
//! JSON artifacts into one output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::meanfield::{self, MeanFieldConfig};
use crate::model::RateKernel;
use crate::oracle::{self, PartitionState};
use crate::output::{write_json, CsvWriter};
use crate::simulator::{self, RunningStats, SimConfig};
use crate::stationary::{self, EXACT_LIMIT_CUTOFF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Exact,
    Meanfield,
    Stationary,
    Limit,
    Convergence,
    Figure1,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Simulate,
        ExperimentKind::Exact,
        ExperimentKind::Meanfield,
        ExperimentKind::Stationary,
        ExperimentKind::Limit,
        ExperimentKind::Convergence,
        ExperimentKind::Figure1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Exact => "exact",
            ExperimentKind::Meanfield => "meanfield",
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Limit => "limit",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Figure1 => "figure1",
        }
    }

    fn seeded(self) -> bool {
        matches!(
            self,
            ExperimentKind::Simulate | ExperimentKind::Convergence | ExperimentKind::Figure1
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Kind-specific parameter object.
    pub parameters: Value,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Files written by a run, plus anything that makes the result partial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl ExperimentSpec {
    /// `seed` overrides a `"seed"` entry in `parameters`; without either the
    /// seed is 0.
    pub fn new(
        kind: ExperimentKind,
        mut parameters: Value,
        output_dir: impl Into<PathBuf>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let obj = parameters
            .as_object_mut()
            .ok_or_else(|| Error::config("parameters must be a JSON object"))?;
        let seed = match seed {
            Some(s) => s,
            None => match obj.get("seed") {
                Some(v) => v
                    .as_u64()
                    .ok_or_else(|| Error::config("seed must be a u64"))?,
                None => 0,
            },
        };
        if kind.seeded() {
            obj.insert("seed".into(), json!(seed));
        }
        Ok(ExperimentSpec {
            kind,
            parameters,
            output_dir: output_dir.into(),
            seed,
        })
    }

    /// Reads the parameter object from a JSON file.
    pub fn from_file(
        kind: ExperimentKind,
        path: &Path,
        output_dir: impl Into<PathBuf>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let parameters: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        ExperimentSpec::new(kind, parameters, output_dir, seed)
    }

    /// Parses and validates the kind-specific parameters without running.
    pub fn validate(&self) -> Result<()> {
        self.parse().map(|_| ())
    }

    fn parse(&self) -> Result<Parsed> {
        let parsed = match self.kind {
            ExperimentKind::Simulate => {
                let mut obj = self.parameters.clone();
                let replicas = match obj.as_object_mut().and_then(|o| o.remove("replicas")) {
                    None => 1,
                    Some(v) => v
                        .as_u64()
                        .ok_or_else(|| Error::config("replicas must be a positive integer"))?
                        as usize,
                };
                let config: SimConfig = from_value(obj)?;
                config.validate()?;
                if replicas == 0 {
                    return Err(Error::config("replicas must be >= 1"));
                }
                Parsed::Simulate(config, replicas)
            }
            ExperimentKind::Exact => {
                let p: ExactParams = from_value(self.parameters.clone())?;
                p.validate()?;
                Parsed::Exact(p)
            }
            ExperimentKind::Meanfield => {
                let p: MeanFieldConfig = from_value(self.parameters.clone())?;
                p.validate()?;
                if !p.x_grid.contains(&1.0) {
                    return Err(Error::config("x_grid must contain 1"));
                }
                Parsed::Meanfield(p)
            }
            ExperimentKind::Stationary => {
                let p: StationaryParams = from_value(self.parameters.clone())?;
                p.validate()?;
                Parsed::Stationary(p)
            }
            ExperimentKind::Limit => {
                let p: LimitParams = from_value(self.parameters.clone())?;
                p.validate()?;
                Parsed::Limit(p)
            }
            ExperimentKind::Convergence => {
                let p: ConvergenceParams = from_value(self.parameters.clone())?;
                p.validate()?;
                Parsed::Convergence(p)
            }
            ExperimentKind::Figure1 => {
                let p: Figure1Params = from_value(self.parameters.clone())?;
                p.validate()?;
                Parsed::Figure1(p)
            }
        };
        Ok(parsed)
    }

    /// Validates, then runs the experiment and writes its artifacts.
    pub fn run(&self) -> Result<RunOutcome> {
        let parsed = self.parse()?;
        let dir = &self.output_dir;
        std::fs::create_dir_all(dir)?;
        match parsed {
            Parsed::Simulate(config, replicas) => write_simulate(&config, replicas, dir),
            Parsed::Exact(p) => write_exact(&p, dir),
            Parsed::Meanfield(p) => write_meanfield(&p, dir),
            Parsed::Stationary(p) => write_stationary(&p, dir),
            Parsed::Limit(p) => write_limit(&p, dir),
            Parsed::Convergence(p) => {
                let report = run_convergence_study(
                    &p.n_list, &p.kernel, &p.x_grid, &p.t_list, p.replicas, p.seed,
                )?;
                report.write(dir)
            }
            Parsed::Figure1(p) => run_figure1(&p)?.write(dir),
        }
    }
}

enum Parsed {
    Simulate(SimConfig, usize),
    Exact(ExactParams),
    Meanfield(MeanFieldConfig),
    Stationary(StationaryParams),
    Limit(LimitParams),
    Convergence(ConvergenceParams),
    Figure1(Figure1Params),
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::config(e.to_string()))
}

// simulate

fn write_simulate(config: &SimConfig, replicas: usize, dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut out = RunOutcome::default();
    let n = config.n as f64;
    let (records, g_stats) = if replicas == 1 {
        (vec![simulator::run(config)?], Vec::new())
    } else {
        let ens = simulator::ensemble(config, replicas, config.seed)?;
        (ens.records, ens.g_stats)
    };
    let first = &records[0];

    let mut traj = CsvWriter::create(dir.join("trajectory.csv"), &["t", "k", "p_k", "w_k"])?;
    for snap in &first.snapshots {
        let b = snap.cluster_count as f64;
        for &(k, c) in &snap.histogram {
            traj.row(&[
                snap.t.into(),
                k.into(),
                (c as f64 / b).into(),
                (c as f64 / n).into(),
            ])?;
        }
    }
    out.files.push(traj.finish()?);

    let mut gn = CsvWriter::create(dir.join("gn.csv"), &["t", "x", "G_n"])?;
    for snap in &first.snapshots {
        for (&x, &g) in snap.g.x_points.iter().zip(&snap.g.values) {
            gn.row(&[snap.t.into(), x.into(), g.into()])?;
        }
    }
    out.files.push(gn.finish()?);

    let mut avg = CsvWriter::create(dir.join("time_average.csv"), &["k", "p_k"])?;
    for (k, p) in first.time_averaged_p.iter().filter(|&(_, p)| p > 0.0) {
        avg.row(&[k.into(), p.into()])?;
    }
    out.files.push(avg.finish()?);

    if replicas > 1 {
        let mut w = CsvWriter::create(
            dir.join("gn_ensemble.csv"),
            &["t", "x", "mean", "variance", "stderr"],
        )?;
        for s in &g_stats {
            w.row(&[
                s.t.into(),
                s.x.into(),
                s.stats.mean().into(),
                s.stats.variance().into(),
                s.stats.std_error().into(),
            ])?;
        }
        out.files.push(w.finish()?);
    }

    let absorbed = records.iter().filter(|r| r.truncated()).count();
    let summary = json!({
        "n": config.n,
        "seed": config.seed,
        "replicas": replicas,
        "event_counts": first.event_counts,
        "total_events": first.total_events(),
        "final_cluster_count": first.final_cluster_count,
        "absorbed_at": first.absorbed_at,
        "absorbed_replicas": absorbed,
        "sojourn_total": first.sojourn_total,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    out.files
        .push(write_json(dir.join("summary.json"), &summary)?);
    Ok(out)
}

// exact

/// Parameters of the `exact` kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactParams {
    pub n: u32,
    pub kernel: RateKernel,
    /// Times at which the transient law started from all singletons is
    /// written.
    #[serde(default)]
    pub times: Vec<f64>,
}

impl ExactParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > oracle::MAX_ORACLE_N {
            return Err(Error::config(format!(
                "n must lie in 1..={}",
                oracle::MAX_ORACLE_N
            )));
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::config("times must be finite and >= 0"));
        }
        Ok(())
    }
}

fn write_exact(p: &ExactParams, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let gen = oracle::build_generator(p.n, &p.kernel)?;
    let names: Vec<String> = gen.states.iter().map(|s| s.to_string()).collect();

    let mut w = CsvWriter::create(
        dir.join("generator.csv"),
        &["row_state", "col_state", "rate"],
    )?;
    for i in 0..gen.dim() {
        for j in 0..gen.dim() {
            w.row(&[
                names[i].as_str().into(),
                names[j].as_str().into(),
                gen.q[(i, j)].into(),
            ])?;
        }
    }
    out.files.push(w.finish()?);

    match oracle::stationary_distribution(&gen) {
        Ok(pi) => {
            let mut w = CsvWriter::create(dir.join("stationary.csv"), &["state", "probability"])?;
            for (name, &prob) in names.iter().zip(&pi) {
                w.row(&[name.as_str().into(), prob.into()])?;
            }
            out.files.push(w.finish()?);
        }
        Err(Error::NoStationaryLaw) => out
            .warnings
            .push("lambda = 0: absorbing chain has no unique stationary law".into()),
        Err(e) => return Err(e),
    }

    if !p.times.is_empty() {
        let init = gen.singletons_index();
        let mut w = CsvWriter::create(dir.join("transient.csv"), &["t", "state", "probability"])?;
        for &t in &p.times {
            let dist = oracle::transient_distribution(&gen, init, t)?;
            for (name, &prob) in names.iter().zip(&dist) {
                w.row(&[t.into(), name.as_str().into(), prob.into()])?;
            }
        }
        out.files.push(w.finish()?);
    }
    Ok(out)
}

// meanfield

fn write_meanfield(p: &MeanFieldConfig, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let sol = meanfield::solve(p)?;

    let mut w = CsvWriter::create(dir.join("meanfield_w.csv"), &["t", "j", "w_j"])?;
    for (t, row) in sol.w.times.iter().zip(&sol.w.w) {
        for (j, &v) in row.iter().enumerate() {
            w.row(&[(*t).into(), (j + 1).into(), v.into()])?;
        }
    }
    out.files.push(w.finish()?);

    let mut g = CsvWriter::create(dir.join("meanfield_G.csv"), &["t", "x", "G"])?;
    for (t, row) in sol.g.times.iter().zip(&sol.g.values) {
        for (&x, &v) in sol.g.x_grid.iter().zip(row) {
            g.row(&[(*t).into(), x.into(), v.into()])?;
        }
    }
    out.files.push(g.finish()?);

    if sol.w.leak_exceeded {
        out.warnings.push(format!(
            "mass leak {:e} exceeds bound {:e}; increase j_max",
            sol.w.max_leak(),
            sol.w.leak_bound
        ));
    }
    if !sol.consistency.pass {
        out.warnings.push(format!(
            "G and w disagree by {:e} (bound {:e})",
            sol.consistency.max_discrepancy, sol.consistency.bound
        ));
    }
    let report = json!({
        "times": sol.w.times,
        "mass": sol.w.mass,
        "leak": sol.w.leak,
        "max_leak": sol.w.max_leak(),
        "leak_bound": sol.w.leak_bound,
        "leak_exceeded": sol.w.leak_exceeded,
        "rel_tol": p.rel_tol,
        "abs_tol": p.abs_tol,
        "j_max": p.j_max,
        "steps": { "G": sol.g.stats, "w": sol.w.stats },
        "consistency": sol.consistency,
    });
    out.files
        .push(write_json(dir.join("meanfield_report.json"), &report)?);
    Ok(out)
}

// stationary

fn default_stationary_j_max() -> usize {
    2000
}

/// Parameters of the `stationary` kind. `lambda` defaults to the kernel's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryParams {
    pub kernel: RateKernel,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_stationary_j_max")]
    pub j_max: usize,
}

impl StationaryParams {
    fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(self.kernel.lambda())
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda() > 0.0 && self.lambda().is_finite()) {
            return Err(Error::config("lambda must be positive"));
        }
        if self.j_max < 2 {
            return Err(Error::config("j_max must be >= 2"));
        }
        Ok(())
    }
}

fn write_stationary(p: &StationaryParams, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let sd = stationary::stationary_w(&p.kernel, p.lambda(), p.j_max)?;
    let mut w = CsvWriter::create(dir.join("stationary_w.csv"), &["j", "w_j", "p_j"])?;
    for ((j, wj), (_, pj)) in sd.w.iter().zip(sd.p.iter()) {
        w.row(&[j.into(), wj.into(), pj.into()])?;
    }
    out.files.push(w.finish()?);
    out.files
        .push(write_json(dir.join("fixedpoint.json"), &sd.fixed_point)?);
    if sd.truncation_warning {
        out.warnings.push(format!(
            "truncation insufficient: |sum w_j - G1| = {:e}",
            sd.truncation_residual
        ));
    }
    Ok(out)
}

// limit

/// Parameters of the `limit` kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitParams {
    pub m: u64,
    pub kmax: u64,
}

impl LimitParams {
    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::config("m must be >= 2"));
        }
        if self.kmax < 1 {
            return Err(Error::config("kmax must be >= 1"));
        }
        Ok(())
    }
}

fn write_limit(p: &LimitParams, dir: &Path) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let dist = stationary::limit_p(p.m, p.kmax)?;
    let mut w = CsvWriter::create(dir.join("limit_p.csv"), &["k", "p_k"])?;
    for (k, pk) in dist.iter() {
        w.row(&[k.into(), pk.into()])?;
    }
    out.files.push(w.finish()?);

    let mut w = CsvWriter::create(
        dir.join("limit_p_exact.csv"),
        &["k", "numerator", "denominator"],
    )?;
    for k in 1..=p.kmax.min(EXACT_LIMIT_CUTOFF) {
        let r = stationary::limit_p_exact(p.m, k)?;
        let (num, den) = (r.numer().to_string(), r.denom().to_string());
        w.row(&[k.into(), num.as_str().into(), den.as_str().into()])?;
    }
    out.files.push(w.finish()?);
    Ok(out)
}

// convergence

fn default_t_list() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
}
fn default_conv_x_grid() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_replicas() -> usize {
    200
}

/// Parameters of the `convergence` kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    pub n_list: Vec<u64>,
    pub kernel: RateKernel,
    #[serde(default = "default_conv_x_grid")]
    pub x_grid: Vec<f64>,
    #[serde(default = "default_t_list")]
    pub t_list: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ConvergenceParams {
    fn validate(&self) -> Result<()> {
        validate_convergence_inputs(&self.n_list, &self.x_grid, &self.t_list, self.replicas)
    }
}

fn validate_convergence_inputs(
    n_list: &[u64],
    x_grid: &[f64],
    t_list: &[f64],
    replicas: usize,
) -> Result<()> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::config(
            "n_list must be strictly increasing with at least 2 positive entries",
        ));
    }
    if x_grid.is_empty() || x_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::config(
            "x_grid must be non-empty with values in [0, 1]",
        ));
    }
    if t_list.is_empty()
        || t_list.windows(2).any(|w| w[0] >= w[1])
        || t_list.iter().any(|t| !(t.is_finite() && *t > 0.0))
    {
        return Err(Error::config(
            "t_list must be strictly increasing, positive and finite",
        ));
    }
    if replicas == 0 {
        return Err(Error::config("replicas must be >= 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    /// Largest estimated `E[(G - G_n)^2]` over the `(x, t)` grid.
    pub sup_sq_error: f64,
    /// Standard error of that estimate; `NaN` with fewer than 2 replicas.
    pub stderr: f64,
    pub worst_t: f64,
    pub worst_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub replicas: usize,
    /// False when the standard errors are undefined.
    pub valid: bool,
    pub strictly_decreasing: bool,
}

impl ConvergenceReport {
    pub fn write(&self, dir: &Path) -> Result<RunOutcome> {
        let mut out = RunOutcome::default();
        let mut w = CsvWriter::create(
            dir.join("convergence.csv"),
            &["n", "sup_sq_error", "stderr"],
        )?;
        for r in &self.rows {
            w.row(&[r.n.into(), r.sup_sq_error.into(), r.stderr.into()])?;
        }
        out.files.push(w.finish()?);
        out.files
            .push(write_json(dir.join("convergence.json"), self)?);
        if !self.valid {
            out.warnings
                .push("fewer than 2 replicas: standard errors undefined".into());
        }
        if !self.strictly_decreasing {
            out.warnings
                .push("sup squared error is not strictly decreasing in n".into());
        }
        Ok(out)
    }
}

/// Estimates `sup_{x,t} E[(G(x,t) - G_n(x,t))^2]` for each `n` from an
/// ensemble of `replicas` runs started from singletons, against the mean-field
/// `G`. Replica seeds derive from `seed`.
pub fn run_convergence_study(
    n_list: &[u64],
    kernel: &RateKernel,
    x_grid: &[f64],
    t_list: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    validate_convergence_inputs(n_list, x_grid, t_list, replicas)?;
    let t_max = *t_list.last().unwrap();
    let mut mf_grid = x_grid.to_vec();
    if !mf_grid.contains(&1.0) {
        mf_grid.push(1.0);
    }
    let mut mf = MeanFieldConfig::new(kernel.clone(), t_max, t_list.to_vec());
    mf.x_grid = mf_grid;
    let g = meanfield::solve_g(&mf)?;

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let config = SimConfig {
            n,
            kernel: kernel.clone(),
            t_max,
            burn_in: 0.0,
            snapshot_times: t_list.to_vec(),
            seed,
            record_g_at: x_grid.to_vec(),
        };
        let ens = simulator::ensemble(&config, replicas, seed)?;
        let mut best: Option<ConvergenceRow> = None;
        for (ti, &t) in t_list.iter().enumerate() {
            for (xi, &x) in x_grid.iter().enumerate() {
                let mut stats = RunningStats::default();
                for rec in &ens.records {
                    let d = rec.snapshots[ti].g.values[xi] - g.values[ti][xi];
                    stats.push(d * d);
                }
                if best
                    .as_ref()
                    .map_or(true, |b| stats.mean() > b.sup_sq_error)
                {
                    best = Some(ConvergenceRow {
                        n,
                        sup_sq_error: stats.mean(),
                        stderr: stats.std_error(),
                        worst_t: t,
                        worst_x: x,
                    });
                }
            }
        }
        rows.push(best.expect("non-empty grid"));
    }
    let strictly_decreasing = rows
        .windows(2)
        .all(|w| w[1].sup_sq_error < w[0].sup_sq_error);
    Ok(ConvergenceReport {
        rows,
        replicas,
        valid: replicas >= 2,
        strictly_decreasing,
    })
}

// figure1

fn default_figure1_kernel() -> BTreeMap<String, f64> {
    BTreeMap::from([("3".to_string(), 1.0), ("4".to_string(), 2.0)])
}
fn default_figure1_k_max() -> usize {
    50
}

/// Parameters of the `figure1` kind. `alpha` uses the kernel's key format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1Params {
    pub n: u64,
    pub lambda: f64,
    #[serde(default = "default_figure1_kernel")]
    pub alpha: BTreeMap<String, f64>,
    pub t_max: f64,
    pub burn_in: f64,
    #[serde(default)]
    pub seed: u64,
    /// Largest size written to `figure1.csv`.
    #[serde(default = "default_figure1_k_max")]
    pub k_max: usize,
    #[serde(default = "default_stationary_j_max")]
    pub j_max: usize,
}

impl Figure1Params {
    pub fn new(n: u64, lambda: f64, t_max: f64, burn_in: f64, seed: u64) -> Self {
        Figure1Params {
            n,
            lambda,
            alpha: default_figure1_kernel(),
            t_max,
            burn_in,
            seed,
            k_max: default_figure1_k_max(),
            j_max: default_stationary_j_max(),
        }
    }

    pub fn kernel(&self) -> Result<RateKernel> {
        from_value(json!({ "lambda": self.lambda, "alpha": self.alpha }))
    }

    fn validate(&self) -> Result<()> {
        let kernel = self.kernel()?;
        if kernel.m() != 3 {
            return Err(Error::config(
                "figure1 needs a kernel whose smallest merge order is 3",
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda must be positive"));
        }
        if self.k_max < 1 || self.j_max < self.k_max.max(2) {
            return Err(Error::config("need 1 <= k_max <= j_max"));
        }
        self.sim_config(kernel).validate()
    }

    fn sim_config(&self, kernel: RateKernel) -> SimConfig {
        SimConfig {
            n: self.n,
            kernel,
            t_max: self.t_max,
            burn_in: self.burn_in,
            snapshot_times: Vec::new(),
            seed: self.seed,
            record_g_at: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Row {
    pub k: usize,
    pub p_empirical: f64,
    pub p_stationary_lambda: f64,
    pub p_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Report {
    pub n: u64,
    pub lambda: f64,
    pub rows: Vec<Figure1Row>,
    /// Time-averaged fraction of clusters with even size (all sizes).
    pub even_mass_empirical: f64,
    pub events: u64,
    pub truncation_warning: bool,
}

/// Time-averaged simulation at one `lambda`, set against the stationary law
/// at that `lambda` and the `lambda -> 0` limit.
pub fn run_figure1(params: &Figure1Params) -> Result<Figure1Report> {
    params.validate()?;
    let kernel = params.kernel()?;
    let record = simulator::run(&params.sim_config(kernel.clone()))?;
    let sd = stationary::stationary_w(&kernel, params.lambda, params.j_max)?;
    let limit = stationary::limit_p(kernel.m() as u64, params.k_max as u64)?;
    let avg = &record.time_averaged_p;
    let rows = (1..=params.k_max)
        .map(|k| Figure1Row {
            k,
            p_empirical: avg.get(k),
            p_stationary_lambda: sd.p.get(k),
            p_limit: limit.get(k),
        })
        .collect();
    let even_mass_empirical = avg
        .iter()
        .filter(|&(k, _)| k % 2 == 0)
        .map(|(_, p)| p)
        .sum();
    Ok(Figure1Report {
        n: params.n,
        lambda: params.lambda,
        rows,
        even_mass_empirical,
        events: record.total_events(),
        truncation_warning: sd.truncation_warning,
    })
}

const FIGURE1_PLT: &str = "\
set datafile separator ','
set logscale xy
set xlabel 'cluster size k'
set ylabel 'p_k'
set key top right
plot 'figure1.csv' skip 1 using 1:($2 > 0 ? $2 : 1/0) with points pt 7 title 'simulation', \\
     '' skip 1 using 1:($3 > 0 ? $3 : 1/0) with lines title 'stationary at lambda', \\
     '' skip 1 using 1:($4 > 0 ? $4 : 1/0) with points pt 6 title 'lambda -> 0'
";

impl Figure1Report {
    pub fn write(&self, dir: &Path) -> Result<RunOutcome> {
        let mut out = RunOutcome::default();
        let mut w = CsvWriter::create(
            dir.join("figure1.csv"),
            &["k", "p_empirical", "p_stationary_lambda", "p_limit"],
        )?;
        for r in &self.rows {
            w.row(&[
                r.k.into(),
                r.p_empirical.into(),
                r.p_stationary_lambda.into(),
                r.p_limit.into(),
            ])?;
        }
        out.files.push(w.finish()?);
        let plt = dir.join("figure1.plt");
        std::fs::write(&plt, FIGURE1_PLT)?;
        out.files.push(plt);
        out.files.push(write_json(dir.join("figure1.json"), self)?);
        if self.truncation_warning {
            out.warnings
                .push("stationary densities truncated; increase j_max".into());
        }
        Ok(out)
    }
}

/// `E[(G(x) - G_n(x))^2]` under a distribution on oracle states.
pub fn exact_sq_error(states: &[PartitionState], probs: &[f64], x: f64, g: f64) -> f64 {
    states
        .iter()
        .zip(probs)
        .map(|(s, &p)| p * (s.g(x) - g).powi(2))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(lambda: f64) -> Value {
        json!({ "lambda": lambda, "alpha": { "2": 1.0 } })
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("plot".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn seed_flag_overrides_parameters() {
        let params = json!({ "n": 10, "kernel": pair(0.1), "t_max": 1.0, "seed": 5 });
        let spec =
            ExperimentSpec::new(ExperimentKind::Simulate, params.clone(), "o", None).unwrap();
        assert_eq!(spec.seed, 5);
        let spec = ExperimentSpec::new(ExperimentKind::Simulate, params, "o", Some(9)).unwrap();
        assert_eq!(spec.parameters["seed"], 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let spec = ExperimentSpec::new(
            ExperimentKind::Limit,
            json!({ "m": 3, "kmax": 10, "extra": 1 }),
            "o",
            None,
        )
        .unwrap();
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn validation_rejects_bad_kernels() {
        for kernel in [
            json!({ "lambda": -1.0, "alpha": { "2": 1.0 } }),
            json!({ "lambda": 1.0, "alpha": { "1": 1.0 } }),
            json!({ "lambda": 1.0, "alpha": {} }),
        ] {
            let spec = ExperimentSpec::new(
                ExperimentKind::Stationary,
                json!({ "kernel": kernel }),
                "o",
                None,
            )
            .unwrap();
            assert!(spec.validate().is_err());
        }
    }

    #[test]
    fn convergence_needs_two_increasing_sizes() {
        let k = RateKernel::new([(2, 1.0)], 0.1).unwrap();
        assert!(run_convergence_study(&[100], &k, &[0.5], &[1.0], 4, 0).is_err());
        assert!(run_convergence_study(&[100, 100], &k, &[0.5], &[1.0], 4, 0).is_err());
    }

    #[test]
    fn single_replica_is_flagged_invalid() {
        let k = RateKernel::new([(2, 1.0)], 0.1).unwrap();
        let r = run_convergence_study(&[10, 20], &k, &[0.5, 1.0], &[1.0], 1, 0).unwrap();
        assert!(!r.valid);
        assert!(r.rows.iter().all(|row| row.stderr.is_nan()));
    }

    #[test]
    fn figure1_requires_order_three() {
        let mut p = Figure1Params::new(100, 0.1, 10.0, 1.0, 0);
        p.alpha = BTreeMap::from([("2".to_string(), 1.0)]);
        assert!(run_figure1(&p).is_err());
    }

    #[test]
    fn figure1_limit_column_vanishes_on_even_sizes() {
        let p = Figure1Params::new(2000, 0.1, 20.0, 5.0, 3);
        let r = run_figure1(&p).unwrap();
        for row in &r.rows {
            if row.k % 2 == 0 {
                assert_eq!(row.p_limit, 0.0);
            }
        }
        assert!((r.rows[0].p_limit - 2.0 / 3.0).abs() < 1e-15);
    }
}
