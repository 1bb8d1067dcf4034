//! Traffic-flow control for active sessions: periodic integrity polling of
//! route nodes (routing tables, MIB labels, forwarding conformance) and the
//! authorized label-rotation schedule.

use serde::{Deserialize, Serialize};

use crate::topology::{NetworkGraph, NodeId, Tick};
use crate::trust_routing::Session;

/// FNV-1a 64-bit offset basis.
pub const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
/// FNV-1a 64-bit prime.
pub const FNV_PRIME: u64 = 1_099_511_628_211;

/// FNV-1a 64-bit hash, bit-exact across implementations.
pub fn fnv1a_64(data: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for byte in data {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Authorized label-rotation schedule for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSchedule {
    pub rotation_period: u64,
    pub session_key: u64,
    pub labels_per_node: u32,
}

impl LabelSchedule {
    pub fn epoch(&self, tick: Tick) -> u64 {
        tick / self.rotation_period
    }

    /// True when `tick` opens a new epoch (tick 0 initializes, it does not rotate).
    pub fn is_rotation_tick(&self, tick: Tick) -> bool {
        tick > 0 && self.epoch(tick) != self.epoch(tick - 1)
    }
}

/// The authorized value of one label: FNV-1a 64 over the UTF-8 of
/// `"<node>|<index>|<epoch>|"` followed by the little-endian session key.
pub fn expected_label(node: &NodeId, index: u32, epoch: u64, session_key: u64) -> u64 {
    let mut data = format!("{}|{}|{}|", node.as_str(), index, epoch).into_bytes();
    data.extend_from_slice(&session_key.to_le_bytes());
    fnv1a_64(&data)
}

/// Writes a full fresh label set for one node at the given epoch.
pub fn inject_labels(graph: &mut NetworkGraph, node_id: &NodeId, epoch: u64, schedule: &LabelSchedule) {
    use crate::topology::{Mib, MibLabel};
    let labels = (0..schedule.labels_per_node)
        .map(|index| MibLabel {
            index,
            value: expected_label(node_id, index, epoch, schedule.session_key),
            encrypted: schedule.session_key != 0,
            bound_node: node_id.clone(),
            epoch,
        })
        .collect();
    if let Some(node) = graph.node_mut(node_id) {
        node.mib = Mib::new(labels);
    }
}

/// Initializes every node's MIB at epoch 0. Idempotent.
pub fn init_all_labels(graph: &mut NetworkGraph, schedule: &LabelSchedule) {
    for id in graph.node_ids() {
        inject_labels(graph, &id, 0, schedule);
    }
}

/// Rewrites the labels of the listed nodes when `tick` opens a new epoch;
/// otherwise mutates nothing. Returns whether a rotation happened. Tampered
/// values are overwritten by rotation, which is why the engine polls before
/// it rotates within a tick.
pub fn rotate_labels(
    graph: &mut NetworkGraph,
    route_nodes: &[NodeId],
    tick: Tick,
    schedule: &LabelSchedule,
) -> bool {
    if !schedule.is_rotation_tick(tick) {
        return false;
    }
    let epoch = schedule.epoch(tick);
    for id in route_nodes {
        inject_labels(graph, id, epoch, schedule);
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    RtChanged,
    LabelMismatch,
    FlowNonConforming,
}

/// A detected integrity violation on one route node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RouteViolation {
    pub kind: ViolationKind,
    pub node: NodeId,
    pub detected_tick: Tick,
}

/// Outcome of one integrity check or poll.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MonitorVerdict {
    Clean,
    Violation(RouteViolation),
}

impl MonitorVerdict {
    pub fn violation(&self) -> Option<&RouteViolation> {
        match self {
            MonitorVerdict::Clean => None,
            MonitorVerdict::Violation(v) => Some(v),
        }
    }
}

/// Clean iff every path node's live routing table equals the snapshot copy
/// entry-for-entry. Any change counts, not just the session's destination.
pub fn check_rt_integrity(session: &Session, graph: &NetworkGraph, tick: Tick) -> MonitorVerdict {
    for id in &session.plan.path {
        let live = match graph.node(id) {
            Some(node) => &node.routing_table,
            None => {
                return MonitorVerdict::Violation(RouteViolation {
                    kind: ViolationKind::RtChanged,
                    node: id.clone(),
                    detected_tick: tick,
                })
            }
        };
        let snap = session.snapshot.get(id).map(|s| &s.routing_table);
        if snap != Some(live) {
            return MonitorVerdict::Violation(RouteViolation {
                kind: ViolationKind::RtChanged,
                node: id.clone(),
                detected_tick: tick,
            });
        }
    }
    MonitorVerdict::Clean
}

/// Clean iff every path node's every label value matches the authorized
/// schedule, so a legitimate rotation is never a violation.
///
/// The engine polls before it rotates within a tick, so at an epoch-boundary
/// tick the previous epoch's values are still the authorized state and are
/// accepted alongside the new epoch's.
pub fn check_label_integrity(
    session: &Session,
    graph: &NetworkGraph,
    tick: Tick,
    schedule: &LabelSchedule,
) -> MonitorVerdict {
    let epoch = schedule.epoch(tick);
    let at_boundary = schedule.is_rotation_tick(tick);
    for id in &session.plan.path {
        let node = match graph.node(id) {
            Some(node) => node,
            None => continue,
        };
        for label in node.mib.labels() {
            let current = expected_label(id, label.index, epoch, schedule.session_key);
            let authorized = label.value == current
                || (at_boundary
                    && label.value == expected_label(id, label.index, epoch - 1, schedule.session_key));
            if !authorized {
                return MonitorVerdict::Violation(RouteViolation {
                    kind: ViolationKind::LabelMismatch,
                    node: id.clone(),
                    detected_tick: tick,
                });
            }
        }
    }
    MonitorVerdict::Clean
}

/// Clean iff every forwarding record this session produced on its current
/// leg names the next hop the prepared route dictates for that node.
pub fn check_flow_conformance(session: &Session, graph: &NetworkGraph, tick: Tick) -> MonitorVerdict {
    for id in &session.plan.path {
        let node = match graph.node(id) {
            Some(node) => node,
            None => continue,
        };
        let expected = session.rt_overrides.get(id);
        for record in &node.forwarding_log {
            if record.flow != session.id
                || record.destination != session.receiver
                || record.tick < session.transfer_since
            {
                continue;
            }
            if Some(&record.next_hop) != expected {
                return MonitorVerdict::Violation(RouteViolation {
                    kind: ViolationKind::FlowNonConforming,
                    node: id.clone(),
                    detected_tick: tick,
                });
            }
        }
    }
    MonitorVerdict::Clean
}

/// Runs the three checks in fixed order (routing tables, labels, flow) and
/// returns the first violation, or Clean. Read-only.
pub fn poll(session: &Session, graph: &NetworkGraph, tick: Tick, schedule: &LabelSchedule) -> MonitorVerdict {
    let rt = check_rt_integrity(session, graph, tick);
    if rt.violation().is_some() {
        return rt;
    }
    let labels = check_label_integrity(session, graph, tick, schedule);
    if labels.violation().is_some() {
        return labels;
    }
    check_flow_conformance(session, graph, tick)
}
