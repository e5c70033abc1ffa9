//! Joint image-layer placement, access-point selection and task assignment
//! for small-cell edge networks.
//!
//! The pipeline is: [`scenario::generate`] a [`Scenario`], build its
//! [`LatencyTable`], assemble the binary program with [`ilp::build_ilp`],
//! relax it with [`admm::run`], and turn the relaxed vector into a feasible
//! [`Solution`] with [`rounding::round`]. [`baselines`] holds the comparison
//! heuristics and an exact oracle for small instances; [`harness`] drives
//! seeded experiment sweeps.
//!
//! ```
//! use mslayer::{admm, build_ilp, check_feasible, generate, rounding};
//! use mslayer::{AdmmParams, GenerationConfig, LatencyTable, StopRule};
//!
//! let cfg = GenerationConfig { seed: 1, num_scns: 4, num_users: 10, ..Default::default() };
//! let s = generate(&cfg)?;
//! let lt = LatencyTable::build(&s);
//! let inst = build_ilp(&s, &lt);
//! let relaxed = admm::run(&inst, &AdmmParams::default(), None)?;
//! let sol = rounding::round(&relaxed.v, &s, &lt, StopRule::FirstFailure)?;
//! assert!(check_feasible(&s, &sol)?.is_feasible());
//! # Ok::<(), mslayer::Error>(())
//! ```

pub mod admm;
pub mod baselines;
pub mod error;
pub mod format;
pub mod harness;
pub mod ilp;
pub mod latency;
pub mod model;
pub mod rounding;
pub mod scenario;

#[cfg(test)]
mod testkit;

pub use admm::{AdmmOutcome, AdmmParams};
pub use baselines::OracleLimits;
pub use error::{Error, Result};
pub use harness::{Algorithm, SolveReport};
pub use ilp::{build_ilp, IlpInstance, VariableLayout};
pub use latency::LatencyTable;
pub use model::{
    check_feasible, evaluate_objective, Constraint, FeasibilityReport, MicroserviceCatalog, NodeSpec, Physics,
    Point, Scenario, Solution, Topology, UserSpec,
};
pub use rounding::StopRule;
pub use scenario::{generate, GenerationConfig};
