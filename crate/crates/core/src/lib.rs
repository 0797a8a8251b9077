//! Multi-merger fragmentation–coalescence processes.
//!
//! `n` particles are grouped into clusters. Every `k`-subset of clusters
//! merges at rate `alpha(k) n^(1-k)` and every cluster shatters into
//! singletons at rate `lambda`. The crate provides:
//!
//! - [`simulator`]: exact event-driven simulation of the finite system,
//! - [`oracle`]: the full generator over integer partitions for small `n`,
//! - [`meanfield`]: the `n -> infinity` generating-function and
//!   Smoluchowski-type equations,
//! - [`stationary`]: fixed points, stationary cluster densities and the
//!   `lambda -> 0` law with its `k^(-3/2)` tail,
//! - [`harness`]: experiment drivers and the file formats used by the CLI.

pub mod error;
pub mod harness;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod output;
pub mod simulator;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{
    empirical_g, empirical_p, kernel_admissible, GeneratingFunctionGrid, RateKernel,
    SizeDistribution, SystemState,
};
