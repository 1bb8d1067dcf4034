//! Scenario files: the strict JSON schema, loading with validation, and
//! canonical rendering back to text.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{EventKind, IntrusionEvent};
use crate::monitor::{init_all_labels, LabelSchedule};
use crate::topology::{NetworkGraph, Node, NodeId, Tick, TrustState};

/// Which arm of the comparison a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tr,
    Vpn,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tr => "tr",
            Mode::Vpn => "vpn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZombifySettings {
    pub enabled: bool,
    pub delay_ticks: u64,
}

/// Run configuration, straight from the scenario file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub mode: Mode,
    pub poll_period: u64,
    pub rotation_period: u64,
    pub labels_per_node: u32,
    pub zombify: ZombifySettings,
    pub require_full_mesh: bool,
    pub excluded_locations: BTreeSet<String>,
    pub seed: u64,
    pub max_ticks: u64,
    pub session_key: u64,
}

impl SimConfig {
    pub fn schedule(&self) -> LabelSchedule {
        LabelSchedule {
            rotation_period: self.rotation_period,
            session_key: self.session_key,
            labels_per_node: self.labels_per_node,
        }
    }
}

/// One traffic demand: `packets` packets from `src` to `dst`, the first
/// departing at `start_tick`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficDemand {
    pub src: NodeId,
    pub dst: NodeId,
    pub packets: u64,
    pub start_tick: Tick,
    pub encrypted: bool,
    pub malicious: bool,
}

/// A fully validated scenario. Node MIBs are initialized at epoch 0; routing
/// tables are populated by the engine at run start.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub graph: NetworkGraph,
    pub traffic: Vec<TrafficDemand>,
    pub events: Vec<IntrusionEvent>,
    pub ids_vantage: Option<NodeId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

// ---------------------------------------------------------------------------
// Raw schema. Unknown keys anywhere are rejected.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    config: RawConfig,
    nodes: Vec<RawNode>,
    links: Vec<RawLink>,
    traffic: Vec<RawDemand>,
    events: Vec<RawEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    poll_period: u64,
    rotation_period: u64,
    labels_per_node: u32,
    zombify: ZombifySettings,
    require_full_mesh: bool,
    excluded_locations: Vec<String>,
    seed: u64,
    max_ticks: u64,
    session_key: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    #[serde(rename = "as")]
    as_id: String,
    location: String,
    trust: RawTrust,
    zombifiable: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawTrust {
    Trusted,
    Untrusted,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    a: String,
    b: String,
    latency_ticks: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    src: String,
    dst: String,
    packets: u64,
    start_tick: u64,
    encrypted: bool,
    #[serde(default)]
    malicious: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    tick: u64,
    kind: RawEventKind,
    node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    destination: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    new_next_hop: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    new_value: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawEventKind {
    TamperRt,
    TamperLabel,
    SilentCompromise,
    RogueGateway,
}

// ---------------------------------------------------------------------------
// Validation helpers
// ---------------------------------------------------------------------------

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| !c.is_whitespace() && !c.is_control())
}

fn check_token(field: &str, value: &str) -> Result<(), ScenarioError> {
    if !is_token(value) {
        return Err(invalid(format!(
            "{field}: \"{value}\" is not a valid token (non-empty, no whitespace)"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Load / render
// ---------------------------------------------------------------------------

/// Parses and validates scenario text. Malformed syntax is a `Parse` error
/// with position; schema and constraint violations are `Validation` errors
/// naming the offending field or reference.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => invalid(e.to_string()),
        _ => ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    scenario_from_raw(raw)
}

fn scenario_from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    let c = &raw.config;
    if c.poll_period < 1 {
        return Err(invalid("config.poll_period must be >= 1"));
    }
    if c.rotation_period < 1 {
        return Err(invalid("config.rotation_period must be >= 1"));
    }
    if c.labels_per_node < 1 {
        return Err(invalid("config.labels_per_node must be >= 1"));
    }
    let mut excluded = BTreeSet::new();
    for tag in &c.excluded_locations {
        check_token("config.excluded_locations", tag)?;
        if tag.chars().any(|ch| ch.is_uppercase()) {
            return Err(invalid(format!(
                "config.excluded_locations: \"{tag}\" must be a lowercase token"
            )));
        }
        excluded.insert(tag.clone());
    }
    let config = SimConfig {
        mode: c.mode,
        poll_period: c.poll_period,
        rotation_period: c.rotation_period,
        labels_per_node: c.labels_per_node,
        zombify: c.zombify,
        require_full_mesh: c.require_full_mesh,
        excluded_locations: excluded,
        seed: c.seed,
        max_ticks: c.max_ticks,
        session_key: c.session_key,
    };

    let mut graph = NetworkGraph::new();
    for n in &raw.nodes {
        check_token("nodes.id", &n.id)?;
        check_token("nodes.as", &n.as_id)?;
        check_token("nodes.location", &n.location)?;
        let trust = match n.trust {
            RawTrust::Trusted => TrustState::Trusted,
            RawTrust::Untrusted => TrustState::Untrusted,
        };
        graph
            .add_node(Node::new(NodeId::new(&n.id), &n.as_id, &n.location, trust, n.zombifiable))
            .map_err(|e| invalid(format!("nodes: {e}")))?;
    }

    for l in &raw.links {
        graph
            .add_link(&NodeId::new(&l.a), &NodeId::new(&l.b), l.latency_ticks)
            .map_err(|e| invalid(format!("links: {e}")))?;
    }

    let mut traffic = Vec::new();
    for (i, d) in raw.traffic.iter().enumerate() {
        let src = NodeId::new(&d.src);
        let dst = NodeId::new(&d.dst);
        if !graph.contains(&src) {
            return Err(invalid(format!("traffic[{i}].src: unknown node \"{src}\"")));
        }
        if !graph.contains(&dst) {
            return Err(invalid(format!("traffic[{i}].dst: unknown node \"{dst}\"")));
        }
        if src == dst {
            return Err(invalid(format!(
                "traffic[{i}]: src and dst are both \"{src}\""
            )));
        }
        traffic.push(TrafficDemand {
            src,
            dst,
            packets: d.packets,
            start_tick: d.start_tick,
            encrypted: d.encrypted,
            malicious: d.malicious,
        });
    }

    let mut events = Vec::new();
    for (i, e) in raw.events.iter().enumerate() {
        events.push(event_from_raw(i, e, &graph, &config)?);
    }

    let ids_vantage = match &raw.ids {
        Some(id) => {
            let vantage = NodeId::new(id);
            if !graph.contains(&vantage) {
                return Err(invalid(format!("ids: unknown node \"{vantage}\"")));
            }
            Some(vantage)
        }
        None => None,
    };

    init_all_labels(&mut graph, &config.schedule());

    Ok(Scenario {
        config,
        graph,
        traffic,
        events,
        ids_vantage,
    })
}

fn event_from_raw(
    i: usize,
    e: &RawEvent,
    graph: &NetworkGraph,
    config: &SimConfig,
) -> Result<IntrusionEvent, ScenarioError> {
    if e.tick > config.max_ticks {
        return Err(invalid(format!(
            "events[{i}].tick: {} is outside [0, {}]",
            e.tick, config.max_ticks
        )));
    }
    let node = NodeId::new(&e.node);
    if !graph.contains(&node) {
        return Err(invalid(format!("events[{i}].node: unknown node \"{node}\"")));
    }
    let forbid = |field: &str, present: bool| -> Result<(), ScenarioError> {
        if present {
            Err(invalid(format!(
                "events[{i}].{field}: not applicable to kind \"{:?}\"",
                e.kind
            )))
        } else {
            Ok(())
        }
    };
    let kind = match e.kind {
        RawEventKind::TamperRt => {
            forbid("index", e.index.is_some())?;
            forbid("new_value", e.new_value.is_some())?;
            let destination = NodeId::new(
                e.destination
                    .as_deref()
                    .ok_or_else(|| invalid(format!("events[{i}].destination: required for tamper_rt")))?,
            );
            let new_next_hop = NodeId::new(
                e.new_next_hop
                    .as_deref()
                    .ok_or_else(|| invalid(format!("events[{i}].new_next_hop: required for tamper_rt")))?,
            );
            if !graph.contains(&destination) {
                return Err(invalid(format!(
                    "events[{i}].destination: unknown node \"{destination}\""
                )));
            }
            if !graph.contains(&new_next_hop) {
                return Err(invalid(format!(
                    "events[{i}].new_next_hop: unknown node \"{new_next_hop}\""
                )));
            }
            if !graph.has_link(&node, &new_next_hop) {
                return Err(invalid(format!(
                    "events[{i}].new_next_hop: \"{new_next_hop}\" is not a neighbor of \"{node}\""
                )));
            }
            EventKind::TamperRt {
                node,
                destination,
                new_next_hop,
            }
        }
        RawEventKind::TamperLabel => {
            forbid("destination", e.destination.is_some())?;
            forbid("new_next_hop", e.new_next_hop.is_some())?;
            let index = e
                .index
                .ok_or_else(|| invalid(format!("events[{i}].index: required for tamper_label")))?;
            let new_value = e
                .new_value
                .ok_or_else(|| invalid(format!("events[{i}].new_value: required for tamper_label")))?;
            if index >= config.labels_per_node {
                return Err(invalid(format!(
                    "events[{i}].index: {index} exceeds labels_per_node {}",
                    config.labels_per_node
                )));
            }
            EventKind::TamperLabel {
                node,
                index,
                new_value,
            }
        }
        RawEventKind::SilentCompromise => {
            forbid("destination", e.destination.is_some())?;
            forbid("new_next_hop", e.new_next_hop.is_some())?;
            forbid("index", e.index.is_some())?;
            forbid("new_value", e.new_value.is_some())?;
            EventKind::SilentCompromise { node }
        }
        RawEventKind::RogueGateway => {
            forbid("destination", e.destination.is_some())?;
            forbid("new_next_hop", e.new_next_hop.is_some())?;
            forbid("index", e.index.is_some())?;
            forbid("new_value", e.new_value.is_some())?;
            if config.mode != Mode::Vpn {
                return Err(invalid(format!(
                    "events[{i}]: rogue_gateway is only valid in vpn mode"
                )));
            }
            EventKind::RogueGateway { node }
        }
    };
    Ok(IntrusionEvent { tick: e.tick, kind })
}

/// Renders a scenario back to canonical file text. `load_scenario` of the
/// result reproduces the scenario exactly.
pub fn render_scenario(scenario: &Scenario) -> String {
    let raw = RawScenario {
        config: RawConfig {
            mode: scenario.config.mode,
            poll_period: scenario.config.poll_period,
            rotation_period: scenario.config.rotation_period,
            labels_per_node: scenario.config.labels_per_node,
            zombify: scenario.config.zombify,
            require_full_mesh: scenario.config.require_full_mesh,
            excluded_locations: scenario.config.excluded_locations.iter().cloned().collect(),
            seed: scenario.config.seed,
            max_ticks: scenario.config.max_ticks,
            session_key: scenario.config.session_key,
        },
        nodes: scenario
            .graph
            .nodes()
            .map(|n| RawNode {
                id: n.id.to_string(),
                as_id: n.as_id.clone(),
                location: n.location.clone(),
                trust: match n.trust {
                    TrustState::Untrusted => RawTrust::Untrusted,
                    _ => RawTrust::Trusted,
                },
                zombifiable: n.zombifiable,
            })
            .collect(),
        links: scenario
            .graph
            .links()
            .map(|(a, b, latency_ticks)| RawLink {
                a: a.to_string(),
                b: b.to_string(),
                latency_ticks,
            })
            .collect(),
        traffic: scenario
            .traffic
            .iter()
            .map(|d| RawDemand {
                src: d.src.to_string(),
                dst: d.dst.to_string(),
                packets: d.packets,
                start_tick: d.start_tick,
                encrypted: d.encrypted,
                malicious: d.malicious,
            })
            .collect(),
        events: scenario
            .events
            .iter()
            .map(|e| {
                let mut raw = RawEvent {
                    tick: e.tick,
                    kind: match e.kind {
                        EventKind::TamperRt { .. } => RawEventKind::TamperRt,
                        EventKind::TamperLabel { .. } => RawEventKind::TamperLabel,
                        EventKind::SilentCompromise { .. } => RawEventKind::SilentCompromise,
                        EventKind::RogueGateway { .. } => RawEventKind::RogueGateway,
                    },
                    node: e.kind.node().to_string(),
                    destination: None,
                    new_next_hop: None,
                    index: None,
                    new_value: None,
                };
                match &e.kind {
                    EventKind::TamperRt {
                        destination,
                        new_next_hop,
                        ..
                    } => {
                        raw.destination = Some(destination.to_string());
                        raw.new_next_hop = Some(new_next_hop.to_string());
                    }
                    EventKind::TamperLabel {
                        index, new_value, ..
                    } => {
                        raw.index = Some(*index);
                        raw.new_value = Some(*new_value);
                    }
                    EventKind::SilentCompromise { .. } | EventKind::RogueGateway { .. } => {}
                }
                raw
            })
            .collect(),
        ids: scenario.ids_vantage.as_ref().map(|v| v.to_string()),
    };
    let mut text = serde_json::to_string_pretty(&raw).expect("scenario serializes");
    text.push('\n');
    text
}
