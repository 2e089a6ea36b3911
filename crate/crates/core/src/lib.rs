//! Tube model predictive control of overhead-line temperatures.
//!
//! The crate covers the whole chain from a scenario description to a
//! closed-loop simulation: network sensitivities ([`grid`]), conductor heat
//! balance ([`thermal`]), the linear prediction model ([`ltimodel`]), gain
//! and invariant-set synthesis ([`robust`]), the nominal problem and tube
//! law ([`mpc`]) and the simulator ([`sim`]).

pub mod grid;
pub mod linalg;
pub mod ltimodel;
pub mod mpc;
pub mod polytope;
pub mod robust;
pub mod scenario;
pub mod sim;
pub mod thermal;

pub use ltimodel::{build_from_scenario, StateLayout, SystemMatrices};
pub use mpc::{MpcConfig, NominalSolution, SynthesisError, SynthesisReport, TubeController};
pub use polytope::HPolytope;
pub use robust::{FeedbackGain, RpiSet};
pub use scenario::{ScenarioConfig, ScenarioError};
pub use sim::{DisturbanceGen, PlantState, SimError, SimTrace, SummaryReport};
