//! Regret-minimizing policies for the secretary problem: exact evaluation,
//! branch-and-bound certification, dynamic-programming lower bounds and
//! Monte Carlo verification.

pub mod analytic;
pub mod certifier;
pub mod dp_lower;
pub mod error;
pub mod extensions;
pub mod model;
pub mod montecarlo;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
pub use model::{ArrivalSample, Instance, Policy, PolicyDecision, RegretReport, ReportKind};
pub use policies::{PolicySpec, ThresholdCurve};
