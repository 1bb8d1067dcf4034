//! Shared test support: independent oracles and seeded scenario generators.
//! Everything here is deliberately written against first principles rather
//! than the implementation it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trsim_core::adversary::{EventKind, IntrusionEvent};
use trsim_core::monitor::init_all_labels;
use trsim_core::scenario::{Mode, Scenario, SimConfig, TrafficDemand, ZombifySettings};
use trsim_core::topology::{NetworkGraph, Node, NodeId, TrustState};
use trsim_core::trust_routing::RoutingPolicy;

pub fn node_id(i: usize) -> NodeId {
    NodeId::new(format!("n{i:02}"))
}

// ---------------------------------------------------------------------------
// Independent FNV-1a oracle
// ---------------------------------------------------------------------------

pub fn oracle_fnv1a(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < data.len() {
        hash ^= data[i] as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
        i += 1;
    }
    hash
}

pub fn oracle_expected_label(node: &str, index: u32, epoch: u64, key: u64) -> u64 {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(node.as_bytes());
    bytes.push(b'|');
    bytes.extend_from_slice(index.to_string().as_bytes());
    bytes.push(b'|');
    bytes.extend_from_slice(epoch.to_string().as_bytes());
    bytes.push(b'|');
    bytes.extend_from_slice(&key.to_le_bytes());
    oracle_fnv1a(&bytes)
}

// ---------------------------------------------------------------------------
// Route oracle over NetworkGraph: exhaustive simple-path enumeration
// ---------------------------------------------------------------------------

/// Best route under (zombifications, hops, lexicographic path), or None when
/// no admissible path exists.
pub fn oracle_best_route(
    graph: &NetworkGraph,
    sender: &NodeId,
    receiver: &NodeId,
    policy: &RoutingPolicy,
) -> Option<(u64, u64, Vec<NodeId>)> {
    let admissible: BTreeSet<NodeId> = graph
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
        .collect();
    if sender == receiver || !admissible.contains(sender) || !admissible.contains(receiver) {
        return None;
    }

    fn dfs(
        graph: &NetworkGraph,
        admissible: &BTreeSet<NodeId>,
        receiver: &NodeId,
        stack: &mut Vec<NodeId>,
        best: &mut Option<(u64, u64, Vec<NodeId>)>,
    ) {
        let here = stack.last().unwrap().clone();
        if &here == receiver {
            let zombs = stack
                .iter()
                .filter(|n| matches!(graph.node(n).unwrap().trust, TrustState::Untrusted))
                .count() as u64;
            let cand = (zombs, (stack.len() - 1) as u64, stack.clone());
            if best.as_ref().map_or(true, |b| &cand < b) {
                *best = Some(cand);
            }
            return;
        }
        for m in graph.neighbors(&here) {
            if admissible.contains(&m) && !stack.contains(&m) {
                stack.push(m);
                dfs(graph, admissible, receiver, stack, best);
                stack.pop();
            }
        }
    }

    let mut best = None;
    dfs(graph, &admissible, receiver, &mut vec![sender.clone()], &mut best);
    best
}

// ---------------------------------------------------------------------------
// Bitmask graphs for the exhaustive small-graph sweep
// ---------------------------------------------------------------------------

/// Edges of the complete graph on n nodes in a fixed order.
pub fn edge_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Adjacency bitmasks for one edge subset.
pub fn subset_adjacency(n: usize, pairs: &[(usize, usize)], mask: u32) -> [u8; 8] {
    let mut adj = [0u8; 8];
    for (bit, (i, j)) in pairs.iter().enumerate() {
        if mask & (1 << bit) != 0 {
            adj[*i] |= 1 << j;
            adj[*j] |= 1 << i;
        }
    }
    let _ = n;
    adj
}

pub fn is_connected_mask(n: usize, adj: &[u8; 8]) -> bool {
    let mut seen: u8 = 1;
    let mut frontier: u8 = 1;
    while frontier != 0 {
        let mut next: u8 = 0;
        for i in 0..n {
            if frontier & (1 << i) != 0 {
                next |= adj[i];
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen.count_ones() as usize == n
}

/// Exhaustive simple-path oracle on bitmask graphs: minimum
/// (zombifications, hops, index-lexicographic path).
pub fn oracle_route_mask(
    n: usize,
    adj: &[u8; 8],
    untrusted: u8,
    admissible: u8,
    s: usize,
    r: usize,
) -> Option<(u32, u32, Vec<u8>)> {
    if s == r || admissible & (1 << s) == 0 || admissible & (1 << r) == 0 {
        return None;
    }
    struct Ctx<'a> {
        n: usize,
        adj: &'a [u8; 8],
        untrusted: u8,
        admissible: u8,
        r: usize,
        best: Option<(u32, u32, Vec<u8>)>,
    }
    fn dfs(ctx: &mut Ctx, stack: &mut Vec<u8>, visited: u8, zombs: u32) {
        let here = *stack.last().unwrap() as usize;
        if here == ctx.r {
            let cand = (zombs, (stack.len() - 1) as u32, stack.clone());
            if ctx.best.as_ref().map_or(true, |b| &cand < b) {
                ctx.best = Some(cand);
            }
            return;
        }
        for m in 0..ctx.n {
            let bit = 1u8 << m;
            if ctx.adj[here] & bit != 0 && ctx.admissible & bit != 0 && visited & bit == 0 {
                let extra = u32::from(ctx.untrusted & bit != 0);
                stack.push(m as u8);
                dfs(ctx, stack, visited | bit, zombs + extra);
                stack.pop();
            }
        }
    }
    let mut ctx = Ctx {
        n,
        adj,
        untrusted,
        admissible,
        r,
        best: None,
    };
    let start_zombs = u32::from(untrusted & (1 << s) != 0);
    dfs(&mut ctx, &mut vec![s as u8], 1 << s, start_zombs);
    ctx.best
}

// ---------------------------------------------------------------------------
// Seeded scenario generators
// ---------------------------------------------------------------------------

/// Random connected graph with a spanning tree plus extra edges.
pub fn random_connected_graph(
    rng: &mut ChaCha8Rng,
    n: usize,
    extra_edge_prob: f64,
    untrusted_prob: f64,
    zombifiable_prob: f64,
    max_latency: u64,
) -> NetworkGraph {
    let mut g = NetworkGraph::new();
    for i in 0..n {
        let trust = if rng.gen_bool(untrusted_prob) {
            TrustState::Untrusted
        } else {
            TrustState::Trusted
        };
        let zombifiable = rng.gen_bool(zombifiable_prob);
        g.add_node(Node::new(
            node_id(i),
            format!("as{}", i % 3),
            format!("loc{}", i % 4),
            trust,
            zombifiable,
        ))
        .unwrap();
    }
    for i in 1..n {
        let j = rng.gen_range(0..i);
        g.add_link(&node_id(i), &node_id(j), rng.gen_range(1..=max_latency))
            .unwrap();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !g.has_link(&node_id(i), &node_id(j)) && rng.gen_bool(extra_edge_prob) {
                g.add_link(&node_id(i), &node_id(j), rng.gen_range(1..=max_latency))
                    .unwrap();
            }
        }
    }
    g
}

pub fn base_config(rng: &mut ChaCha8Rng, mode: Mode) -> SimConfig {
    SimConfig {
        mode,
        poll_period: rng.gen_range(1..=4),
        rotation_period: rng.gen_range(1..=7),
        labels_per_node: rng.gen_range(1..=3),
        zombify: ZombifySettings {
            enabled: rng.gen_bool(0.5),
            delay_ticks: rng.gen_range(0..=2),
        },
        require_full_mesh: false,
        excluded_locations: BTreeSet::new(),
        seed: rng.gen(),
        max_ticks: 400,
        session_key: rng.gen(),
    }
}

/// Normalizes a programmatically built scenario the way loading does.
pub fn finish_scenario(mut scenario: Scenario) -> Scenario {
    init_all_labels(&mut scenario.graph, &scenario.config.schedule());
    scenario
}

/// Random tr-mode scenario whose adversary uses only routing-table and label
/// tampering.
pub fn gen_tamper_only_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..=12);
    let graph = random_connected_graph(&mut rng, n, 0.25, 0.3, 0.7, 3);
    let config = base_config(&mut rng, Mode::Tr);

    let mut traffic = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let src = rng.gen_range(0..n);
        let dst = loop {
            let d = rng.gen_range(0..n);
            if d != src {
                break d;
            }
        };
        traffic.push(TrafficDemand {
            src: node_id(src),
            dst: node_id(dst),
            packets: rng.gen_range(1..=6),
            start_tick: rng.gen_range(0..=10),
            encrypted: rng.gen_bool(0.5),
            malicious: false,
        });
    }

    let mut events = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let tick = rng.gen_range(0..=30);
        let node = node_id(rng.gen_range(0..n));
        let kind = if rng.gen_bool(0.5) {
            let neighbors = graph.neighbors(&node);
            let new_next_hop = neighbors[rng.gen_range(0..neighbors.len())].clone();
            EventKind::TamperRt {
                node: node.clone(),
                destination: node_id(rng.gen_range(0..n)),
                new_next_hop,
            }
        } else {
            EventKind::TamperLabel {
                node: node.clone(),
                index: rng.gen_range(0..config.labels_per_node),
                new_value: rng.gen(),
            }
        };
        events.push(IntrusionEvent { tick, kind });
    }

    finish_scenario(Scenario {
        config,
        graph,
        traffic,
        events,
        ids_vantage: None,
    })
}

/// All-trusted redundant graph with one long-lived session and exactly one
/// guaranteed-effective routing-table tamper on an on-route node. Returns
/// the scenario, the tampered node, and the tamper tick.
pub fn gen_single_rt_tamper_scenario(seed: u64) -> Option<(Scenario, NodeId, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..=10);
    let graph = random_connected_graph(&mut rng, n, 0.45, 0.0, 0.0, 2);
    let mut config = base_config(&mut rng, Mode::Tr);
    config.poll_period = rng.gen_range(1..=5);
    config.zombify = ZombifySettings {
        enabled: false,
        delay_ticks: 0,
    };
    config.max_ticks = 300;

    let src = rng.gen_range(0..n);
    let dst = loop {
        let d = rng.gen_range(0..n);
        if d != src {
            break d;
        }
    };
    let policy = RoutingPolicy {
        zombify_enabled: false,
        zombify_delay_ticks: 0,
        excluded_locations: BTreeSet::new(),
    };
    let (_, _, path) = oracle_best_route(&graph, &node_id(src), &node_id(dst), &policy)?;
    if path.len() < 3 {
        return None;
    }
    let mid_idx = rng.gen_range(1..path.len() - 1);
    let mid = path[mid_idx].clone();
    let successor = path[mid_idx + 1].clone();
    // Any neighbor other than the route successor changes the entry.
    let new_next_hop = graph.neighbors(&mid).into_iter().find(|m| *m != successor)?;

    let tamper_tick = rng.gen_range(3..=20);
    let events = vec![IntrusionEvent {
        tick: tamper_tick,
        kind: EventKind::TamperRt {
            node: mid.clone(),
            destination: node_id(dst),
            new_next_hop,
        },
    }];
    let traffic = vec![TrafficDemand {
        src: node_id(src),
        dst: node_id(dst),
        packets: 40,
        start_tick: 0,
        encrypted: true,
        malicious: false,
    }];

    Some((
        finish_scenario(Scenario {
            config,
            graph,
            traffic,
            events,
            ids_vantage: None,
        }),
        mid,
        tamper_tick,
    ))
}

/// Scenario whose trust-blind shortest path crosses an untrusted device
/// while an all-trusted detour exists.
pub fn gen_untrusted_shortcut_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let detour_len = rng.gen_range(2..=4);
    let mut graph = NetworkGraph::new();
    let mut add = |g: &mut NetworkGraph, name: &str, trust: TrustState| {
        g.add_node(Node::new(NodeId::new(name), "as1", "loc1", trust, false))
            .unwrap();
    };
    add(&mut graph, "dst", TrustState::Trusted);
    add(&mut graph, "mid", TrustState::Untrusted);
    add(&mut graph, "src", TrustState::Trusted);
    for i in 0..detour_len {
        add(&mut graph, &format!("t{i}"), TrustState::Trusted);
    }
    graph.add_link(&NodeId::new("src"), &NodeId::new("mid"), 1).unwrap();
    graph.add_link(&NodeId::new("mid"), &NodeId::new("dst"), 1).unwrap();
    graph.add_link(&NodeId::new("src"), &NodeId::new("t0"), 1).unwrap();
    for i in 1..detour_len {
        graph
            .add_link(&NodeId::new(&format!("t{}", i - 1)), &NodeId::new(&format!("t{i}")), 1)
            .unwrap();
    }
    graph
        .add_link(&NodeId::new(&format!("t{}", detour_len - 1)), &NodeId::new("dst"), 1)
        .unwrap();

    let mut config = base_config(&mut rng, Mode::Tr);
    config.zombify = ZombifySettings {
        enabled: false,
        delay_ticks: 0,
    };
    let traffic = vec![TrafficDemand {
        src: NodeId::new("src"),
        dst: NodeId::new("dst"),
        packets: rng.gen_range(1..=5),
        start_tick: 0,
        encrypted: true,
        malicious: false,
    }];
    finish_scenario(Scenario {
        config,
        graph,
        traffic,
        events: vec![],
        ids_vantage: None,
    })
}
