//! Deterministic slotted random-access network simulator and controller
//! library.
//!
//! The crate simulates multihop slotted-Aloha networks with per-(link,
//! session) queues, fading integer-rate channels, and a family of
//! transmission-probability controllers:
//!
//! - closed-form single-link and single-hop optima driven by served-packet
//!   windows and collision estimates ([`controllers`]),
//! - static and proportional-fair assignments,
//! - state-based ratio rules (linear / square / exponential transforms of
//!   backpressure weights).
//!
//! Controllers are certified against independent brute-force baselines in
//! [`oracle`]: probability grid search, finite-horizon dynamic programming
//! with exact expectations, and exhaustive max-weight scheduling.
//!
//! Runs are bit-reproducible: every random process derives from the run seed
//! through keyed substreams ([`stochastic`]).

pub mod controllers;
pub mod engine;
pub mod metrics;
pub mod oracle;
pub mod scenario;
pub mod stochastic;
pub mod topology;

pub use controllers::{PolicyKind, ResolvedPolicy, SbraTransform, WeightMode};
pub use engine::{run, Attempt, EngineError, SimConfig, Simulation, SlotOutcome};
pub use metrics::{MetricsReport, SessionMetrics, Stability};
pub use scenario::{parse_scenario, parse_scenario_str, ScenarioConfig, ScenarioError};
pub use stochastic::{ChannelKind, RngStream, StreamKind};
pub use topology::{
    build_topology, LinkId, NodeId, PairIndex, QueueMatrix, Session, SessionId, Topology,
    TopologyError, TopologySpec,
};
