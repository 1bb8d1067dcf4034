//! Network data model: routing devices, links, trust states, routing tables
//! and MIB label stores, plus structural validation and state snapshots.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time base. Whole ticks only.
pub type Tick = u64;

/// Identifier of a routing device. Unique within a scenario, stable for a run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Trust standing of a routing device.
///
/// `Compromised` is adversary-induced (or assigned on detection) and never
/// comes from scenario input. `Zombified` and `Compromised` carry the tick
/// at which the transition takes effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustState {
    Trusted,
    Untrusted,
    Zombified { since_tick: Tick },
    Compromised { since_tick: Tick },
}

impl TrustState {
    /// Zombified devices are under full control and count as trusted.
    pub fn is_trusted_equivalent(&self) -> bool {
        matches!(self, TrustState::Trusted | TrustState::Zombified { .. })
    }

    pub fn is_compromised(&self) -> bool {
        matches!(self, TrustState::Compromised { .. })
    }
}

/// Destination to next-hop mapping. Iteration is sorted by destination id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, NodeId>,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, destination: NodeId, next_hop: NodeId) {
        self.entries.insert(destination, next_hop);
    }

    pub fn next_hop(&self, destination: &NodeId) -> Option<&NodeId> {
        self.entries.get(destination)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A router-bound integrity label held in the device MIB.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MibLabel {
    pub index: u32,
    pub value: u64,
    pub encrypted: bool,
    pub bound_node: NodeId,
    pub epoch: u64,
}

/// The label store of one device: indices 0..k-1 with no gaps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mib {
    labels: Vec<MibLabel>,
}

impl Mib {
    pub fn new(labels: Vec<MibLabel>) -> Self {
        debug_assert!(labels.iter().enumerate().all(|(i, l)| l.index as usize == i));
        Mib { labels }
    }

    pub fn labels(&self) -> &[MibLabel] {
        &self.labels
    }

    pub fn label_mut(&mut self, index: u32) -> Option<&mut MibLabel> {
        self.labels.get_mut(index as usize)
    }

    pub fn labels_mut(&mut self) -> &mut [MibLabel] {
        &mut self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One observed forwarding action of a device.
///
/// The flow id disambiguates concurrent sessions that share a node and a
/// receiver; conformance checks filter on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForwardRecord {
    pub tick: Tick,
    pub flow: u64,
    pub destination: NodeId,
    pub next_hop: NodeId,
}

/// A routing device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub id: NodeId,
    pub as_id: String,
    pub location: String,
    pub trust: TrustState,
    pub zombifiable: bool,
    pub routing_table: RoutingTable,
    pub mib: Mib,
    pub forwarding_log: Vec<ForwardRecord>,
}

impl Node {
    pub fn new(
        id: NodeId,
        as_id: impl Into<String>,
        location: impl Into<String>,
        trust: TrustState,
        zombifiable: bool,
    ) -> Self {
        Node {
            id,
            as_id: as_id.into(),
            location: location.into(),
            trust,
            zombifiable,
            routing_table: RoutingTable::new(),
            mib: Mib::default(),
            forwarding_log: Vec::new(),
        }
    }

    /// Appends a forwarding observation; the log is append-only and
    /// tick-nondecreasing by construction of the engine loop.
    pub fn log_forward(&mut self, tick: Tick, flow: u64, destination: NodeId, next_hop: NodeId) {
        debug_assert!(self.forwarding_log.last().map_or(true, |r| r.tick <= tick));
        self.forwarding_log.push(ForwardRecord {
            tick,
            flow,
            destination,
            next_hop,
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("unknown node \"{0}\"")]
    UnknownNode(NodeId),
    #[error("duplicate node id \"{0}\"")]
    DuplicateNode(NodeId),
    #[error("self-loop on node \"{0}\"")]
    SelfLoop(NodeId),
    #[error("duplicate link between \"{0}\" and \"{1}\"")]
    DuplicateLink(NodeId, NodeId),
    #[error("link {a}-{b} has latency {latency}, minimum is 1")]
    InvalidLatency { a: NodeId, b: NodeId, latency: u64 },
    #[error("graph is disconnected: no path from \"{from}\" to \"{to}\"")]
    DisconnectedGraph { from: NodeId, to: NodeId },
}

/// Undirected graph of routing devices with integer link latencies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NetworkGraph {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<(NodeId, NodeId), u64>,
}

fn link_key(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), TopologyError> {
        if self.nodes.contains_key(&node.id) {
            return Err(TopologyError::DuplicateNode(node.id.clone()));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_link(&mut self, a: &NodeId, b: &NodeId, latency_ticks: u64) -> Result<(), TopologyError> {
        if !self.nodes.contains_key(a) {
            return Err(TopologyError::UnknownNode(a.clone()));
        }
        if !self.nodes.contains_key(b) {
            return Err(TopologyError::UnknownNode(b.clone()));
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a.clone()));
        }
        if latency_ticks < 1 {
            return Err(TopologyError::InvalidLatency {
                a: a.clone(),
                b: b.clone(),
                latency: latency_ticks,
            });
        }
        let key = link_key(a, b);
        if self.links.contains_key(&key) {
            return Err(TopologyError::DuplicateLink(key.0, key.1));
        }
        self.links.insert(key, latency_ticks);
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in sorted id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().cloned().collect()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn links(&self) -> impl Iterator<Item = (&NodeId, &NodeId, u64)> {
        self.links.iter().map(|((a, b), lat)| (a, b, *lat))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_latency(&self, a: &NodeId, b: &NodeId) -> Option<u64> {
        self.links.get(&link_key(a, b)).copied()
    }

    pub fn has_link(&self, a: &NodeId, b: &NodeId) -> bool {
        self.link_latency(a, b).is_some()
    }

    /// Sorted neighbor ids of one node.
    pub fn neighbors(&self, id: &NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .links
            .keys()
            .filter_map(|(a, b)| {
                if a == id {
                    Some(b.clone())
                } else if b == id {
                    Some(a.clone())
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    /// Full adjacency with sorted neighbor lists. Built fresh on each call.
    pub fn adjacency(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.keys().map(|id| (id.clone(), Vec::new())).collect();
        for (a, b) in self.links.keys() {
            adj.get_mut(a).unwrap().push(b.clone());
            adj.get_mut(b).unwrap().push(a.clone());
        }
        for neighbors in adj.values_mut() {
            neighbors.sort();
        }
        adj
    }
}

/// Structural policy violation. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum GraphViolation {
    /// The graph splits into more than one connected component.
    Disconnected { components: Vec<Vec<NodeId>> },
    /// A pair of trusted devices lacks a direct link (full-mesh policy).
    MissingMeshLink { a: NodeId, b: NodeId },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::Disconnected { components } => {
                let rendered: Vec<String> = components
                    .iter()
                    .map(|c| {
                        let ids: Vec<&str> = c.iter().map(|n| n.as_str()).collect();
                        format!("{{{}}}", ids.join(", "))
                    })
                    .collect();
                write!(f, "graph is disconnected: components {}", rendered.join(" | "))
            }
            GraphViolation::MissingMeshLink { a, b } => {
                write!(f, "full-mesh policy: trusted nodes \"{a}\" and \"{b}\" share no direct link")
            }
        }
    }
}

/// Checks connectivity and, when `require_full_mesh` is set, that every pair
/// of trusted devices shares a direct link. Returns one descriptor per
/// violation in deterministic order (connectivity first, then missing pairs
/// sorted by id).
pub fn validate_graph(graph: &NetworkGraph, require_full_mesh: bool) -> Vec<GraphViolation> {
    let mut violations = Vec::new();
    let ids = graph.node_ids();
    if ids.is_empty() {
        return violations;
    }

    let adj = graph.adjacency();
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut components: Vec<Vec<NodeId>> = Vec::new();
    for start in &ids {
        if seen.contains(start) {
            continue;
        }
        let mut component = Vec::new();
        let mut queue = VecDeque::from([start.clone()]);
        seen.insert(start.clone());
        while let Some(id) = queue.pop_front() {
            component.push(id.clone());
            for m in &adj[&id] {
                if seen.insert(m.clone()) {
                    queue.push_back(m.clone());
                }
            }
        }
        component.sort();
        components.push(component);
    }
    if components.len() > 1 {
        violations.push(GraphViolation::Disconnected { components });
    }

    if require_full_mesh {
        let trusted: Vec<&NodeId> = ids
            .iter()
            .filter(|id| graph.node(id).unwrap().trust.is_trusted_equivalent())
            .collect();
        for (i, a) in trusted.iter().enumerate() {
            for b in &trusted[i + 1..] {
                if !graph.has_link(a, b) {
                    violations.push(GraphViolation::MissingMeshLink {
                        a: (*a).clone(),
                        b: (*b).clone(),
                    });
                }
            }
        }
    }

    violations
}

/// Hop distances from every node, by breadth-first search with sorted
/// neighbor expansion. `u32::MAX` marks unreachable pairs.
fn all_pairs_hop_distance(
    ids: &[NodeId],
    adj: &BTreeMap<NodeId, Vec<NodeId>>,
) -> BTreeMap<NodeId, BTreeMap<NodeId, u32>> {
    let mut all = BTreeMap::new();
    for src in ids {
        let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
        dist.insert(src.clone(), 0);
        let mut queue = VecDeque::from([src.clone()]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for v in &adj[&u] {
                if !dist.contains_key(v) {
                    dist.insert(v.clone(), du + 1);
                    queue.push_back(v.clone());
                }
            }
        }
        all.insert(src.clone(), dist);
    }
    all
}

/// Populates every node's routing table with the next hop on a minimum-hop
/// path to every other node. Ties break to the smallest next-hop id, which
/// makes the walk from any source the lexicographically smallest minimum-hop
/// path. Deterministic.
pub fn initial_routing_tables(graph: &mut NetworkGraph) -> Result<(), TopologyError> {
    let ids = graph.node_ids();
    let adj = graph.adjacency();
    let dist = all_pairs_hop_distance(&ids, &adj);

    let mut tables: BTreeMap<NodeId, RoutingTable> = BTreeMap::new();
    for n in &ids {
        let mut table = RoutingTable::new();
        for d in &ids {
            if d == n {
                continue;
            }
            let dn = dist[n].get(d).copied().unwrap_or(u32::MAX);
            if dn == u32::MAX {
                return Err(TopologyError::DisconnectedGraph {
                    from: n.clone(),
                    to: d.clone(),
                });
            }
            // Neighbors are sorted, so the first one on a shortest path wins.
            let next = adj[n]
                .iter()
                .find(|m| dist[*m].get(d).copied().unwrap_or(u32::MAX) == dn - 1)
                .expect("some neighbor lies on a shortest path");
            table.insert(d.clone(), next.clone());
        }
        tables.insert(n.clone(), table);
    }

    for (id, table) in tables {
        graph.node_mut(&id).unwrap().routing_table = table;
    }
    Ok(())
}

/// Immutable copy of routing table and MIB state for a set of nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StateSnapshot {
    entries: BTreeMap<NodeId, NodeStateCopy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeStateCopy {
    pub routing_table: RoutingTable,
    pub mib: Mib,
}

impl StateSnapshot {
    pub fn get(&self, id: &NodeId) -> Option<&NodeStateCopy> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Deep-copies the routing table and MIB of each listed node. Later graph
/// mutation does not affect the returned snapshot.
pub fn snapshot_state(graph: &NetworkGraph, route_nodes: &[NodeId]) -> Result<StateSnapshot, TopologyError> {
    let mut entries = BTreeMap::new();
    for id in route_nodes {
        let node = graph
            .node(id)
            .ok_or_else(|| TopologyError::UnknownNode(id.clone()))?;
        entries.insert(
            id.clone(),
            NodeStateCopy {
                routing_table: node.routing_table.clone(),
                mib: node.mib.clone(),
            },
        );
    }
    Ok(StateSnapshot { entries })
}
