//! D-optimal beacon placement for range-aided localization.
//!
//! Given positions to localize (each with a Gaussian prior) and a finite set of
//! candidate beacon sites, pick `K` beacons maximizing the log-determinant of
//! the posterior information, then check the arrangement by simulating range
//! measurements and solving the MAP localization problem.
//!
//! The crate is organised along the pipeline:
//!
//! * [`scenario`]: problem instances, the cutoff-induced measurement graph and
//!   simulation of ground truth and noisy ranges.
//! * [`information`]: per-position Fisher information blocks and the
//!   log-det objective with rank-one incremental updates.
//! * [`selection`]: greedy maximization plus the brute-force, measurement,
//!   coverage and random baselines, and the `1 - 1/e` certificate.
//! * [`cmaes`]: a CMA-ES search over stacked beacon coordinates, snapped to
//!   the candidate set.
//! * [`localization`]: damped Newton MAP / ML solvers and RMSE.
//! * [`harness`]: trial generation, experiment sweeps, statistics and export.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cmaes;
pub mod error;
pub mod harness;
pub mod information;
pub mod localization;
pub mod rng;
pub mod scenario;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
pub use information::{FimMode, InfoState};
pub use scenario::{BeaconId, Instance, MeasurementGraph, MeasurementSet, Scenario};
pub use selection::{Algorithm, SelectionResult};
