//! Scheduled intrusion events that mutate live graph or tunnel state, and the
//! vantage-point observer that reproduces tunnel invisibility to an IDS.

use serde::Serialize;
use thiserror::Error;

use crate::topology::{NetworkGraph, NodeId, Tick, TrustState};
use crate::vpn::{retarget_gateway, Tunnel};

/// What an intrusion event does when it fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// Rewrite one live routing-table entry. The snapshot taken at session
    /// preparation is untouched.
    TamperRt {
        node: NodeId,
        destination: NodeId,
        new_next_hop: NodeId,
    },
    /// Overwrite one live MIB label value.
    TamperLabel {
        node: NodeId,
        index: u32,
        new_value: u64,
    },
    /// Mark the node compromised without touching routing table or labels;
    /// it records every transiting packet as exposure from then on.
    SilentCompromise { node: NodeId },
    /// Re-target active tunnel endpoints to an imposter gateway. Valid in
    /// vpn mode only.
    RogueGateway { node: NodeId },
}

impl EventKind {
    pub fn node(&self) -> &NodeId {
        match self {
            EventKind::TamperRt { node, .. }
            | EventKind::TamperLabel { node, .. }
            | EventKind::SilentCompromise { node }
            | EventKind::RogueGateway { node } => node,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TamperRt { .. } => "tamper_rt",
            EventKind::TamperLabel { .. } => "tamper_label",
            EventKind::SilentCompromise { .. } => "silent_compromise",
            EventKind::RogueGateway { .. } => "rogue_gateway",
        }
    }

    /// Rogue gateways only exist in vpn mode; everything else applies anywhere.
    pub fn valid_in_tr_mode(&self) -> bool {
        !matches!(self, EventKind::RogueGateway { .. })
    }
}

/// An adversary action scheduled for one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntrusionEvent {
    pub tick: Tick,
    pub kind: EventKind,
}

/// What an applied event changed, for the metrics log and replay checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MutationRecord {
    pub tick: Tick,
    pub node: NodeId,
    pub action: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown node \"{0}\"")]
    UnknownNode(NodeId),
    #[error("event \"{0}\" is not valid in this mode")]
    InvalidForMode(&'static str),
}

/// Applies one event to the live state and returns records of what changed.
/// Tunnel redirection needs the active tunnels; tr-mode callers pass none.
pub fn apply_event(
    event: &IntrusionEvent,
    graph: &mut NetworkGraph,
    tunnels: &mut [&mut Tunnel],
    tick: Tick,
) -> Result<Vec<MutationRecord>, AdversaryError> {
    debug_assert_eq!(event.tick, tick);
    let mut records = Vec::new();
    match &event.kind {
        EventKind::TamperRt {
            node,
            destination,
            new_next_hop,
        } => {
            let n = graph
                .node_mut(node)
                .ok_or_else(|| AdversaryError::UnknownNode(node.clone()))?;
            let old = n
                .routing_table
                .next_hop(destination)
                .map(|h| h.to_string())
                .unwrap_or_else(|| "-".into());
            n.routing_table.insert(destination.clone(), new_next_hop.clone());
            records.push(MutationRecord {
                tick,
                node: node.clone(),
                action: format!("rt[{destination}]: {old} -> {new_next_hop}"),
            });
        }
        EventKind::TamperLabel {
            node,
            index,
            new_value,
        } => {
            let n = graph
                .node_mut(node)
                .ok_or_else(|| AdversaryError::UnknownNode(node.clone()))?;
            if let Some(label) = n.mib.label_mut(*index) {
                let old = label.value;
                label.value = *new_value;
                records.push(MutationRecord {
                    tick,
                    node: node.clone(),
                    action: format!("mib[{index}]: {old} -> {new_value}"),
                });
            }
        }
        EventKind::SilentCompromise { node } => {
            let n = graph
                .node_mut(node)
                .ok_or_else(|| AdversaryError::UnknownNode(node.clone()))?;
            n.trust = TrustState::Compromised { since_tick: tick };
            records.push(MutationRecord {
                tick,
                node: node.clone(),
                action: "silent compromise".into(),
            });
        }
        EventKind::RogueGateway { node } => {
            if !graph.contains(node) {
                return Err(AdversaryError::UnknownNode(node.clone()));
            }
            for tunnel in tunnels.iter_mut() {
                let old = tunnel.gateway.clone();
                if retarget_gateway(tunnel, graph, node) {
                    records.push(MutationRecord {
                        tick,
                        node: node.clone(),
                        action: format!("tunnel {}: gateway {old} -> {node}", tunnel.vpn_id),
                    });
                }
            }
        }
    }
    Ok(records)
}

/// An alert raised by the vantage-point observer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdsAlert {
    pub tick: Tick,
    pub description: String,
}

/// Intrusion-detection observer pinned to one vantage node. It only ever
/// sees packet payloads that are observable at that node; tunnel-encrypted
/// traffic passes it blind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdsObserver {
    pub vantage: NodeId,
    pub alerts: Vec<IdsAlert>,
}

impl IdsObserver {
    pub fn new(vantage: NodeId) -> Self {
        IdsObserver {
            vantage,
            alerts: Vec::new(),
        }
    }
}

/// A packet as the observer sees it at one node.
#[derive(Debug, Clone, Copy)]
pub struct PacketSight {
    pub flow: u64,
    pub seq: u64,
    pub observable: bool,
    pub malicious: bool,
}

/// Appends an alert when an observable, scenario-flagged malicious packet
/// passes the vantage node. Returns whether an alert was raised.
pub fn ids_observe(ids: &mut IdsObserver, packet: &PacketSight, node: &NodeId, tick: Tick) -> bool {
    if node != &ids.vantage || !packet.observable || !packet.malicious {
        return false;
    }
    ids.alerts.push(IdsAlert {
        tick,
        description: format!("malicious payload of flow {} seq {} at {}", packet.flow, packet.seq, node),
    });
    true
}
