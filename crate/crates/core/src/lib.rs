//! # trsim-core
//!
//! A deterministic tick-based simulator of trusted routing over untrusted
//! networks, paired with a trust-blind VPN tunnel baseline so the two
//! data-transfer methods can be compared on measured security metrics:
//! data exposure, detection latency, reroutes and IDS visibility.
//!
//! The trusted-routing arm prepares routes constrained to trusted (or
//! zombifiable) devices, snapshots routing tables and MIB integrity labels
//! at preparation time, polls the route for unauthorized changes, and halts
//! and reroutes the transfer on detection. The VPN arm tunnels encrypted
//! packets over the plain shortest path, ignoring trust, and only accounts
//! for what on-path devices could observe.
//!
//! Runs are driven by JSON scenario files (see [`scenario`]) and produce
//! byte-stable JSON reports (see [`metrics`]).

pub mod adversary;
pub mod compare;
pub mod engine;
pub mod metrics;
pub mod monitor;
pub mod scenario;
pub mod topology;
pub mod trust_routing;
pub mod vpn;

pub use compare::run_comparison;
pub use engine::{run, run_traced, RunTrace, SimError};
pub use metrics::{ComparisonReport, MetricsReport};
pub use scenario::{load_scenario, render_scenario, Mode, Scenario, ScenarioError};
pub use topology::{validate_graph, GraphViolation, NetworkGraph, NodeId, Tick};
