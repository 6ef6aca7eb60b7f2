//! Data-driven Lyapunov stability verification for closed-loop systems that
//! are known only through sampled `(state, action, state-derivative)` triples.
//!
//! The pipeline has two stages. [`lipschitz`] estimates local Lipschitz
//! constants `(L_x, L_u)` at every sample by a two-variable QP over the
//! sample's δ-neighbourhood. [`verify`] then bounds the Lyapunov derivative at
//! each sample under the policy being checked: the unknown closed-loop
//! derivative is confined to an intersection of balls (one per neighbouring
//! sample) and [`qclp`] computes the worst-case value of `∇V(x)ᵀẋ` over that
//! intersection. Every bound negative ⇒ stable; every minimum positive ⇒
//! unstable.
//!
//! [`linear`] holds the closed-form criteria for plants known to be linear,
//! and [`systems`] provides the benchmark plants, policies and Lyapunov
//! functions.

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod linear;
pub mod pipeline;
pub mod lipschitz;
pub mod qclp;
pub mod systems;
pub mod verify;

pub use dataset::{Dataset, DatasetMeta, NeighborIndex, Sample, TimeKind};
pub use error::{Error, Result};
pub use lipschitz::LipschitzField;
pub use qclp::{Ball, QclpResult, QclpStatus};
pub use systems::{Experiment, ExperimentName, LyapunovFn, Policy, SystemSpec};
pub use verify::{Mode, Overall, PointReport, Verdict};
