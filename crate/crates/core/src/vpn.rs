//! The comparison arm: a trust-ignorant encrypted tunnel over minimum-hop
//! paths, with gateway redirection for rogue-endpoint events.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::topology::{NetworkGraph, NodeId};

/// A point-to-point encrypted tunnel. The gateway starts out as the intended
/// receiver and only changes if a rogue-gateway event re-targets it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tunnel {
    pub vpn_id: u64,
    pub sender: NodeId,
    pub intended_receiver: NodeId,
    pub gateway: NodeId,
    pub path: Vec<NodeId>,
    pub encrypted: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VpnError {
    #[error("no path from \"{from}\" to \"{to}\"")]
    Disconnected { from: NodeId, to: NodeId },
}

/// The minimum-hop path from `from` to `to`, ties broken to the smallest
/// next-hop id at each step. Ignores trust states and locations entirely.
pub fn min_hop_path(graph: &NetworkGraph, from: &NodeId, to: &NodeId) -> Option<Vec<NodeId>> {
    if !graph.contains(from) || !graph.contains(to) {
        return None;
    }
    let adj = graph.adjacency();
    // Hop distances to the destination.
    let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
    dist.insert(to.clone(), 0);
    let mut queue = VecDeque::from([to.clone()]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for v in &adj[&u] {
            if !dist.contains_key(v) {
                dist.insert(v.clone(), du + 1);
                queue.push_back(v.clone());
            }
        }
    }
    dist.get(from)?;

    let mut path = vec![from.clone()];
    while path.last().unwrap() != to {
        let here = path.last().unwrap().clone();
        let dh = dist[&here];
        let next = adj[&here]
            .iter()
            .find(|m| dist.get(*m).copied() == Some(dh - 1))
            .expect("some neighbor is closer to the destination")
            .clone();
        path.push(next);
    }
    Some(path)
}

/// Establishes a tunnel on the trust-blind minimum-hop path.
pub fn establish_tunnel(
    graph: &NetworkGraph,
    sender: &NodeId,
    receiver: &NodeId,
    vpn_id: u64,
) -> Result<Tunnel, VpnError> {
    let path = min_hop_path(graph, sender, receiver).ok_or_else(|| VpnError::Disconnected {
        from: sender.clone(),
        to: receiver.clone(),
    })?;
    Ok(Tunnel {
        vpn_id,
        sender: sender.clone(),
        intended_receiver: receiver.clone(),
        gateway: receiver.clone(),
        path,
        encrypted: true,
    })
}

/// Re-targets the tunnel endpoint to `node`. Packets launched afterwards
/// follow the new path; in-flight packets continue to the old gateway.
/// Returns false when the redirect is not applicable (self or unreachable).
pub fn retarget_gateway(tunnel: &mut Tunnel, graph: &NetworkGraph, node: &NodeId) -> bool {
    if node == &tunnel.sender {
        return false;
    }
    match min_hop_path(graph, &tunnel.sender, node) {
        Some(path) => {
            tunnel.gateway = node.clone();
            tunnel.path = path;
            true
        }
        None => false,
    }
}
