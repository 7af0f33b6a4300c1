//! Simulation and analysis toolkit for Franson interferometry on
//! time-energy entangled photon pairs.
//!
//! The crate is organised along the data flow of an experiment:
//!
//! * [`scenario`] describes the apparatus (source, channels, interferometers,
//!   detectors, time interval analyser) and checks the Franson conditions.
//! * [`quantum`] holds the closed-form model: joint path-outcome
//!   probabilities, intrinsic visibility and the expected rate budget.
//! * [`montecarlo`] turns a scenario into detector time-tag streams.
//! * [`timetag`] reads and writes those streams and correlates them into
//!   coincidence histograms.
//! * [`analysis`] extracts peaks, fits fringes and evaluates the CHSH
//!   parameter.
//! * [`pipeline`] strings the pieces together for phase sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod montecarlo;
pub mod pipeline;
pub mod quantum;
pub mod scenario;
pub mod stats;
pub mod timetag;

pub use analysis::{BellResult, FringeFit, FringeScan, PeakCounts};
pub use montecarlo::{simulate, Origin, SimulationResult};
pub use quantum::{joint_outcomes, rate_budget, JointOutcomeDistribution, RateBudget};
pub use scenario::{load_scenario, ScenarioConfig};
pub use timetag::{correlate, CoincidenceHistogram, TimeTag};

/// Scenario document reproducing the published apparatus.
pub const DEFAULT_SCENARIO: &str = include_str!("../../../scenarios/paper-default.scenario");
