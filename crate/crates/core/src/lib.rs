//! Simulation and online control of a three-hop mobile edge computing
//! pipeline: uplink radio, GPU inference at the edge, downlink radio.
//!
//! * [`sim`] is a deterministic discrete-event model of the pipeline with
//!   piecewise-constant service rates.
//! * [`traffic`] draws on/off user activity and 30 fps frame arrivals.
//! * [`bandit`] holds the contextual UCB1 tables and the monotone update.
//! * [`control`] runs the per-slot loop for the Static, TCP-based, UCB1 and
//!   MUCB1 schemes.
//! * [`metrics`] computes QoS delivery, average resources and power savings.
//! * [`scenario`] and [`runner`] load scenario files and write CSV artifacts.

pub mod bandit;
pub mod control;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod traffic;

pub use bandit::{ActionSpace, ContextualBanditTable, CostParams};
pub use control::{Controller, HopBudgets, SchemeKind, SlotRecord};
pub use metrics::{PowerParams, SummaryRow};
pub use scenario::{load_config, ScenarioConfig};
pub use sim::{Frame, Hop, HopAllocation, SimConfig, Simulator};
