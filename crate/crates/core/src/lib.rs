//! Machine-to-machine trust for small drone swarms.
//!
//! Drones entering a shared airspace exchange a *digital twin*: a declared
//! behaviour model consisting of a finite state machine, static safety
//! attributes, a mission route, and a trajectory-prediction contract. Each
//! drone then checks every peer's broadcast telemetry against that peer's own
//! declaration and turns the outcome into a trust score. Peers that fall
//! below the decision threshold are met with countermeasures (avoid, slow
//! down, stop) and reported to an orchestrator that dispatches hazard
//! recovery plans.
//!
//! The crate is organised along that pipeline:
//!
//! * [`dt_model`]: twin documents, FSM validation/stepping, trajectory
//!   prediction, canonical serialization.
//! * [`safety`]: hazard catalogs, compiled safety rule sets, separation and
//!   static-attribute checks, unsafe-control-action classification.
//! * [`compliance`]: per-tick conformance checking of telemetry traces
//!   against a twin, producing honesty/openness figures.
//! * [`trust`]: direct evidence, second-hand reputation reports, combined
//!   scores and trust decisions.
//! * [`sim`]: a deterministic discrete-time multi-drone simulation that ties
//!   the above together and writes reproducible run artifacts.
//! * [`cli`]: the `twin-trust` command line (validate / run / assess).

#![forbid(unsafe_code)]

pub mod canonical_json;
pub mod cli;
pub mod compliance;
pub mod dt_model;
pub mod geom;
pub mod safety;
pub mod sim;
pub mod trust;

pub use dt_model::{DigitalTwin, DroneId, FsmSpec, StateId};
pub use safety::SafetyRuleSet;
