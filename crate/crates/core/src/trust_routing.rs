//! Trusted-route computation: admissibility filtering, lexicographically
//! optimal path selection, zombification of untrusted devices, and session
//! preparation with state snapshots.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use serde::Serialize;
use thiserror::Error;

use crate::monitor::{inject_labels, LabelSchedule, ViolationKind};
use crate::topology::{snapshot_state, NetworkGraph, NodeId, StateSnapshot, Tick, TrustState};

/// Node admissibility policy for route computation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoutingPolicy {
    pub zombify_enabled: bool,
    pub zombify_delay_ticks: u64,
    pub excluded_locations: BTreeSet<String>,
}

/// Route cost, ordered lexicographically: zombifications first, then hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct RouteCost {
    pub zombifications: u64,
    pub hops: u64,
}

/// A prepared route: the path, the untrusted devices on it that require
/// zombification, and the cost that selected it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoutePlan {
    pub path: Vec<NodeId>,
    pub zombify_set: BTreeSet<NodeId>,
    pub cost: RouteCost,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("NoTrustedRoute: no admissible route from \"{sender}\" to \"{receiver}\"")]
    NoTrustedRoute { sender: NodeId, receiver: NodeId },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZombifyError {
    #[error("unknown node \"{0}\"")]
    UnknownNode(NodeId),
    #[error("node \"{0}\" is not zombifiable")]
    NotZombifiable(NodeId),
    #[error("zombification is disabled by policy")]
    ZombifyDisabled,
}

/// Lifecycle of a data-transfer session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SessionState {
    Preparing,
    Transferring,
    Halted {
        kind: ViolationKind,
        node: NodeId,
        tick: Tick,
    },
    Rerouting,
    Completed,
    Failed {
        reason: String,
    },
}

impl SessionState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Completed | SessionState::Failed { .. })
    }
}

/// A prepared trusted-transfer session. The snapshot and per-session routing
/// overrides are installed at the transition into `Transferring`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub id: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub plan: RoutePlan,
    pub snapshot: StateSnapshot,
    /// Path successor for each forwarding node on the route, keyed by node.
    /// Session-scoped: ambient routing tables stay untouched.
    pub rt_overrides: BTreeMap<NodeId, NodeId>,
    pub state: SessionState,
    pub packets_pending: u64,
    pub packets_in_flight: u64,
    pub packets_delivered: u64,
    pub created_tick: Tick,
    /// Earliest tick at which all zombifications are effective and the
    /// session may start transferring.
    pub ready_tick: Tick,
    /// Tick of the most recent transition into `Transferring`. Forwarding
    /// records older than this belong to a previous leg of the session.
    pub transfer_since: Tick,
}

/// Nodes a trusted route may use: trusted and zombified devices, plus (when
/// zombification is enabled) untrusted devices that can be taken over.
/// Devices in excluded locations and compromised devices never qualify.
pub fn admissible_nodes(graph: &NetworkGraph, policy: &RoutingPolicy) -> BTreeSet<NodeId> {
    graph
        .nodes()
        .filter(|node| {
            if policy.excluded_locations.contains(&node.location) {
                return false;
            }
            match node.trust {
                TrustState::Trusted | TrustState::Zombified { .. } => true,
                TrustState::Untrusted => policy.zombify_enabled && node.zombifiable,
                TrustState::Compromised { .. } => false,
            }
        })
        .map(|node| node.id.clone())
        .collect()
}

/// Indexed view of the admissible subgraph, used by the route search.
struct Indexed {
    ids: Vec<NodeId>,
    adj: Vec<Vec<usize>>,
    zombify_weight: Vec<u64>,
}

impl Indexed {
    fn build(graph: &NetworkGraph, admissible: &BTreeSet<NodeId>) -> Self {
        let ids: Vec<NodeId> = admissible.iter().cloned().collect();
        let pos: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for (a, b, _) in graph.links() {
            if let (Some(&ia), Some(&ib)) = (pos.get(a), pos.get(b)) {
                adj[ia].push(ib);
                adj[ib].push(ia);
            }
        }
        for neighbors in &mut adj {
            neighbors.sort_unstable();
        }
        let zombify_weight = ids
            .iter()
            .map(|id| match graph.node(id).unwrap().trust {
                TrustState::Untrusted => 1,
                _ => 0,
            })
            .collect();
        Indexed {
            ids,
            adj,
            zombify_weight,
        }
    }

    /// Minimum (zombifications, hops) from every node to `target`, over the
    /// subgraph with `avoid` removed. Costs include the weight of every node
    /// on the path, both endpoints included.
    fn min_cost_to(&self, target: usize, avoid: &[bool]) -> Vec<Option<(u64, u64)>> {
        let n = self.ids.len();
        let mut best: Vec<Option<(u64, u64)>> = vec![None; n];
        if avoid[target] {
            return best;
        }
        let mut heap = BinaryHeap::new();
        best[target] = Some((self.zombify_weight[target], 0));
        heap.push(Reverse(((self.zombify_weight[target], 0), target)));
        while let Some(Reverse((cost, u))) = heap.pop() {
            if best[u] != Some(cost) {
                continue;
            }
            for &v in &self.adj[u] {
                if avoid[v] {
                    continue;
                }
                let cand = (cost.0 + self.zombify_weight[v], cost.1 + 1);
                if best[v].map_or(true, |b| cand < b) {
                    best[v] = Some(cand);
                    heap.push(Reverse((cand, v)));
                }
            }
        }
        best
    }
}

/// Computes the route from `sender` to `receiver` that minimizes, in order:
/// zombification count, hop count, then the path's id sequence. A
/// zero-zombification route is therefore always preferred when one exists.
pub fn compute_trusted_route(
    graph: &NetworkGraph,
    sender: &NodeId,
    receiver: &NodeId,
    policy: &RoutingPolicy,
) -> Result<RoutePlan, RouteError> {
    let no_route = || RouteError::NoTrustedRoute {
        sender: sender.clone(),
        receiver: receiver.clone(),
    };
    if sender == receiver {
        return Err(no_route());
    }
    let admissible = admissible_nodes(graph, policy);
    if !admissible.contains(sender) || !admissible.contains(receiver) {
        return Err(no_route());
    }

    let indexed = Indexed::build(graph, &admissible);
    let pos: BTreeMap<&NodeId, usize> = indexed.ids.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let (src, dst) = (pos[sender], pos[receiver]);

    let mut avoid = vec![false; indexed.ids.len()];
    let full = indexed.min_cost_to(dst, &avoid);
    let (total_z, total_h) = full[src].ok_or_else(no_route)?;

    // Greedy lexicographic construction: extend with the smallest-id
    // neighbor from which the optimum is still reachable. Equal-cost optimal
    // paths all have length `total_h`, so elementwise comparison applies and
    // the greedy choice is globally lexicographically minimal.
    let mut path = vec![src];
    avoid[src] = true;
    let mut spent_z = indexed.zombify_weight[src];
    let mut spent_h = 0;
    while *path.last().unwrap() != dst {
        let here = *path.last().unwrap();
        let remaining = indexed.min_cost_to(dst, &avoid);
        let target = (total_z - spent_z, total_h - spent_h - 1);
        let next = indexed.adj[here]
            .iter()
            .copied()
            .find(|&m| !avoid[m] && remaining[m] == Some(target))
            .expect("an optimal continuation exists by construction");
        path.push(next);
        avoid[next] = true;
        spent_z += indexed.zombify_weight[next];
        spent_h += 1;
    }

    let path: Vec<NodeId> = path.into_iter().map(|i| indexed.ids[i].clone()).collect();
    let zombify_set: BTreeSet<NodeId> = path
        .iter()
        .filter(|id| matches!(graph.node(id).unwrap().trust, TrustState::Untrusted))
        .cloned()
        .collect();
    debug_assert_eq!(zombify_set.len() as u64, total_z);

    Ok(RoutePlan {
        path,
        zombify_set,
        cost: RouteCost {
            zombifications: total_z,
            hops: total_h,
        },
    })
}

/// Takes control of an untrusted device: marks it zombified effective at
/// `tick + zombify_delay_ticks` and injects a fresh label set at the current
/// epoch. Returns the effective tick.
pub fn zombify(
    graph: &mut NetworkGraph,
    node_id: &NodeId,
    policy: &RoutingPolicy,
    schedule: &LabelSchedule,
    tick: Tick,
) -> Result<Tick, ZombifyError> {
    if !policy.zombify_enabled {
        return Err(ZombifyError::ZombifyDisabled);
    }
    let node = graph
        .node(node_id)
        .ok_or_else(|| ZombifyError::UnknownNode(node_id.clone()))?;
    if !node.zombifiable || !matches!(node.trust, TrustState::Untrusted) {
        return Err(ZombifyError::NotZombifiable(node_id.clone()));
    }
    let since_tick = tick + policy.zombify_delay_ticks;
    graph.node_mut(node_id).unwrap().trust = TrustState::Zombified { since_tick };
    inject_labels(graph, node_id, schedule.epoch(tick), schedule);
    Ok(since_tick)
}

/// Computes a route, zombifies what the plan requires, and returns the new
/// session. When nothing delays readiness the session transitions straight
/// to `Transferring` with its snapshot taken; otherwise it stays `Preparing`
/// until `ready_tick` and the engine finalizes it.
pub fn prepare_session(
    graph: &mut NetworkGraph,
    id: u64,
    sender: &NodeId,
    receiver: &NodeId,
    policy: &RoutingPolicy,
    schedule: &LabelSchedule,
    tick: Tick,
) -> Session {
    let mut session = Session {
        id,
        sender: sender.clone(),
        receiver: receiver.clone(),
        plan: RoutePlan {
            path: Vec::new(),
            zombify_set: BTreeSet::new(),
            cost: RouteCost {
                zombifications: 0,
                hops: 0,
            },
        },
        snapshot: StateSnapshot::default(),
        rt_overrides: BTreeMap::new(),
        state: SessionState::Preparing,
        packets_pending: 0,
        packets_in_flight: 0,
        packets_delivered: 0,
        created_tick: tick,
        ready_tick: tick,
        transfer_since: tick,
    };
    match compute_trusted_route(graph, sender, receiver, policy) {
        Ok(plan) => {
            let mut ready = tick;
            for node_id in &plan.zombify_set {
                let since = zombify(graph, node_id, policy, schedule, tick)
                    .expect("zombify_set members are untrusted and zombifiable");
                ready = ready.max(since);
            }
            session.plan = plan;
            session.ready_tick = ready;
            if ready <= tick {
                finalize_session(graph, &mut session, tick);
            }
        }
        Err(RouteError::NoTrustedRoute { .. }) => {
            session.state = SessionState::Failed {
                reason: "NoTrustedRoute".into(),
            };
        }
    }
    session
}

/// Transitions a ready session into `Transferring`: takes the state snapshot
/// over the full path and installs the per-session next-hop overrides.
pub fn finalize_session(graph: &NetworkGraph, session: &mut Session, tick: Tick) {
    debug_assert!(session.ready_tick <= tick);
    debug_assert!(matches!(
        session.state,
        SessionState::Preparing | SessionState::Rerouting
    ));
    session.snapshot = snapshot_state(graph, &session.plan.path)
        .expect("route nodes exist in the graph they were computed from");
    session.rt_overrides = session
        .plan
        .path
        .windows(2)
        .map(|pair| (pair[0].clone(), pair[1].clone()))
        .collect();
    session.transfer_since = tick;
    session.state = SessionState::Transferring;
}
