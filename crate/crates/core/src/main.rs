use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use fragcoal::harness::{ExperimentKind, ExperimentSpec};
use fragcoal::Error;

/// Simulation and analysis of multiple coalescence with shattering fragmentation.
#[derive(Parser, Debug)]
#[command(name = "fragcoal", version)]
struct Cli {
    /// JSON parameter file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $FRAGCOAL_OUT, else the current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base RNG seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ensembles.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stochastic simulation of the finite system.
    Simulate {
        /// Independent replicas; more than 1 also writes ensemble statistics.
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Exact Markov chain over partitions of a small n.
    Exact,
    /// Mean-field limit equations.
    Meanfield,
    /// Stationary fixed point and densities.
    Stationary,
    /// The lambda -> 0 limit distribution.
    Limit(LimitArgs),
    /// Self-averaging study over increasing n.
    Convergence,
    /// Simulation against the stationary and limit laws for a three-body kernel.
    Figure1,
}

#[derive(Args, Debug)]
struct LimitArgs {
    /// Smallest merge order.
    #[arg(long)]
    m: Option<u64>,
    /// Largest cluster size.
    #[arg(long)]
    kmax: Option<u64>,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Simulate { .. } => ExperimentKind::Simulate,
            Command::Exact => ExperimentKind::Exact,
            Command::Meanfield => ExperimentKind::Meanfield,
            Command::Stationary => ExperimentKind::Stationary,
            Command::Limit(_) => ExperimentKind::Limit,
            Command::Convergence => ExperimentKind::Convergence,
            Command::Figure1 => ExperimentKind::Figure1,
        }
    }

    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        match self {
            Command::Simulate { replicas: Some(r) } => {
                m.insert("replicas".into(), json!(r));
            }
            Command::Limit(a) => {
                if let Some(v) = a.m {
                    m.insert("m".into(), json!(v));
                }
                if let Some(v) = a.kmax {
                    m.insert("kmax".into(), json!(v));
                }
            }
            _ => {}
        }
        m
    }
}

fn run(cli: Cli) -> Result<Vec<String>, Error> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;

    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("FRAGCOAL_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut params = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Map::new()),
    };
    let obj = params
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    obj.extend(cli.command.overrides());

    let spec = ExperimentSpec::new(cli.command.kind(), params, out, cli.seed)?;
    let outcome = spec.run()?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.warnings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(warnings) if warnings.is_empty() => ExitCode::SUCCESS,
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
