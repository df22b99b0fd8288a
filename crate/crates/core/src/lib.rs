//! Hospital-to-SNF transfer decisions as an average-cost Markov decision process.
//!
//! A hospital discharges at most one patient per period. Each skilled nursing
//! facility (SNF) is either available or not, and its availability evolves as a
//! two-state Markov chain whose transition matrix may depend on where the
//! current patient was sent. The crate provides:
//!
//! * [`model`]: instances, the state space, the product-form kernel and the
//!   Bellman operator;
//! * [`solve`]: discounted value iteration, Howard policy iteration for the
//!   average-cost criterion, and exact policy evaluation;
//! * [`policies`]: the myopic, `r+pr` and two-step heuristics together with
//!   structural condition checkers and operation counters;
//! * [`scenario`]: random baseline matrices, the three dependency scenarios and
//!   batch sweeps;
//! * [`simulate`]: Monte Carlo evaluation of stationary policies;
//! * [`estimate`]: logistic-regression readmission rates with bootstrap
//!   confidence intervals.
//!
//! All numerical code is generic over a [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common `f64` case.

pub mod error;
pub mod estimate;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod model;
pub mod policies;
pub mod scalar;
pub mod scenario;
pub mod simulate;
pub mod solve;

pub use error::{Error, Result};
pub use model::{NextStateDistribution, StateSpace, SystemState};
pub use policies::{ActionScore, Heuristic, OpCounter, ScoreBreakdown, ThresholdViolation};
pub use scalar::Scalar;
pub use scenario::{ScenarioKind, ScenarioSpec, SweepRecord, SweepResult};
pub use solve::{Criterion, Policy, Provenance};

/// Double-precision instance.
pub type Instance = model::Instance<f64>;
/// Single-precision instance.
pub type Instance32 = model::Instance<f32>;
/// Double-precision solver output.
pub type SolveResult = solve::SolveResult<f64>;
pub type SolveResult32 = solve::SolveResult<f32>;
/// 2×2 availability transition matrix in double precision.
pub type Transition = model::Transition<f64>;
pub type BaselineSet = scenario::BaselineSet<f64>;
pub type KernelSet = scenario::KernelSet<f64>;

pub type SimulationEstimate = simulate::SimulationEstimate<f64>;
pub type RateTable = estimate::RateTable;
