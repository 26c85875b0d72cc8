//! Balanced-allocation processes with a hyperbolic cosine potential toolkit.
//!
//! The [`LoadState`] tracks bin loads and their rank order; [`processes`]
//! implements the allocation rules; [`potentials`] evaluates and certifies the
//! drift of the potential; [`experiments`] runs seeded sweeps and fits gap
//! scaling laws; [`plot`] renders result tables as SVG; [`selftest`] bundles
//! the invariant checks.

pub mod check;
pub mod error;
pub mod experiments;
pub mod graphs;
pub mod load;
pub mod plot;
pub mod potentials;
pub mod processes;
pub mod rng;
pub mod selftest;
pub mod table;
pub mod vectors;
pub mod weights;

pub use error::{Error, Result};
pub use load::LoadState;
pub use rng::CounterRng;
pub use vectors::{ConditionParams, ProbabilityVector};
pub use table::{Table, Value};
pub use weights::WeightDistribution;
pub use graphs::{GraphKind, RegularGraph};
pub use potentials::{CertResult, PotentialReport};
pub use processes::{ProcessKind, ProcessSpec, RoundOutcome, TieRule};
pub use experiments::{ExperimentConfig, FitReport, ScalingAxis};
pub use check::CheckResult;
