//! Deterministic tick loop: adversary events, integrity polling, label
//! rotation, packet injection and movement, halt-and-reroute, and metrics
//! accumulation.
//!
//! Within a tick the order is fixed: adversary events, monitor poll (with
//! detection handling), label rotation, flow progression (session creation,
//! readiness, one departure per flow), packet movement, then bookkeeping.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::adversary::{apply_event, ids_observe, IdsObserver, MutationRecord, PacketSight};
use crate::metrics::{Detection, ExposureCounts, MetricsReport, SessionSummary};
use crate::monitor::{poll, rotate_labels, LabelSchedule, RouteViolation, ViolationKind};
use crate::scenario::{Mode, Scenario, SimConfig, TrafficDemand};
use crate::topology::{
    initial_routing_tables, NetworkGraph, NodeId, Tick, TopologyError, TrustState,
};
use crate::trust_routing::{
    compute_trusted_route, finalize_session, prepare_session, zombify, RoutingPolicy, Session,
    SessionState,
};
use crate::vpn::{establish_tunnel, Tunnel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// A data unit in flight. `next_idx` points at the path node it arrives at
/// when `arrive_tick` is reached.
#[derive(Debug, Clone)]
struct Packet {
    flow: u64,
    seq: u64,
    path: Arc<Vec<NodeId>>,
    next_idx: usize,
    arrive_tick: Tick,
    encrypted: bool,
    malicious: bool,
}

#[derive(Debug)]
enum FlowPhase {
    NotStarted,
    Tr(Session),
    Vpn(Tunnel),
}

#[derive(Debug)]
struct Flow {
    id: u64,
    demand: TrafficDemand,
    phase: FlowPhase,
    pending: VecDeque<u64>,
    sent: u64,
    delivered: u64,
    dropped: u64,
}

impl Flow {
    fn is_terminal(&self) -> bool {
        match &self.phase {
            FlowPhase::NotStarted => false,
            FlowPhase::Tr(session) => session.state.is_terminal(),
            FlowPhase::Vpn(_) => self.delivered + self.dropped == self.demand.packets,
        }
    }

    fn state_string(&self) -> String {
        match &self.phase {
            FlowPhase::NotStarted => "not_started".into(),
            FlowPhase::Tr(session) => match &session.state {
                SessionState::Preparing => "preparing".into(),
                SessionState::Transferring => "transferring".into(),
                SessionState::Halted { .. } => "halted".into(),
                SessionState::Rerouting => "rerouting".into(),
                SessionState::Completed => "completed".into(),
                SessionState::Failed { reason } => format!("failed({reason})"),
            },
            FlowPhase::Vpn(_) => {
                if self.is_terminal() {
                    "completed".into()
                } else {
                    "active".into()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepartureRecord {
    pub tick: Tick,
    pub flow: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitRecord {
    pub tick: Tick,
    pub node: NodeId,
    pub flow: u64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HaltRecord {
    pub flow: u64,
    pub detection_tick: Tick,
    pub resume_tick: Option<Tick>,
}

/// Detailed run artifacts beyond the report, for analysis and tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunTrace {
    pub departures: Vec<DepartureRecord>,
    pub transits: Vec<TransitRecord>,
    pub halts: Vec<HaltRecord>,
    pub rotation_ticks: Vec<Tick>,
    pub mutations: Vec<MutationRecord>,
    pub notices: Vec<String>,
}

struct EngineState {
    config: SimConfig,
    policy: RoutingPolicy,
    schedule: LabelSchedule,
    all_node_ids: Vec<NodeId>,
    graph: NetworkGraph,
    events: Vec<crate::adversary::IntrusionEvent>,
    flows: Vec<Flow>,
    in_flight: Vec<Packet>,
    ids: Option<IdsObserver>,
    plaintext_exposures: ExposureCounts,
    ciphertext_exposures: ExposureCounts,
    detections: Vec<Detection>,
    /// (tick, node, matching violation kind) for detection-latency matching.
    cause_log: Vec<(Tick, NodeId, ViolationKind)>,
    reroute_count: u64,
    zombification_count: u64,
    trace: RunTrace,
}

/// Runs a scenario to completion and returns its report.
pub fn run(scenario: &Scenario) -> Result<MetricsReport, SimError> {
    run_traced(scenario).map(|(report, _)| report)
}

/// Runs a scenario and also returns the detailed trace.
pub fn run_traced(scenario: &Scenario) -> Result<(MetricsReport, RunTrace), SimError> {
    let mut state = EngineState::new(scenario)?;
    let mut executed = 0;
    for tick in 0..=scenario.config.max_ticks {
        state.step(tick);
        executed = tick + 1;
        if state.finished() {
            break;
        }
    }
    Ok(state.into_report(executed))
}

impl EngineState {
    fn new(scenario: &Scenario) -> Result<Self, SimError> {
        let mut graph = scenario.graph.clone();
        initial_routing_tables(&mut graph)?;
        let schedule = scenario.config.schedule();
        crate::monitor::init_all_labels(&mut graph, &schedule);
        let policy = RoutingPolicy {
            zombify_enabled: scenario.config.zombify.enabled,
            zombify_delay_ticks: scenario.config.zombify.delay_ticks,
            excluded_locations: scenario.config.excluded_locations.clone(),
        };
        let flows = scenario
            .traffic
            .iter()
            .enumerate()
            .map(|(i, demand)| Flow {
                id: i as u64,
                demand: demand.clone(),
                phase: FlowPhase::NotStarted,
                pending: VecDeque::new(),
                sent: 0,
                delivered: 0,
                dropped: 0,
            })
            .collect();
        Ok(EngineState {
            all_node_ids: graph.node_ids(),
            policy,
            schedule,
            graph,
            events: scenario.events.clone(),
            flows,
            in_flight: Vec::new(),
            ids: scenario.ids_vantage.clone().map(IdsObserver::new),
            plaintext_exposures: ExposureCounts::default(),
            ciphertext_exposures: ExposureCounts::default(),
            detections: Vec::new(),
            cause_log: Vec::new(),
            reroute_count: 0,
            zombification_count: 0,
            trace: RunTrace::default(),
            config: scenario.config.clone(),
        })
    }

    fn step(&mut self, tick: Tick) {
        self.apply_due_events(tick);
        if self.config.mode == Mode::Tr && tick % self.config.poll_period == 0 {
            self.poll_sessions(tick);
        }
        if self.config.mode == Mode::Tr
            && rotate_labels(&mut self.graph, &self.all_node_ids, tick, &self.schedule)
        {
            self.trace.rotation_ticks.push(tick);
        }
        self.progress_flows(tick);
        self.move_packets(tick);
        self.settle(tick);
    }

    fn apply_due_events(&mut self, tick: Tick) {
        let due: Vec<crate::adversary::IntrusionEvent> = self
            .events
            .iter()
            .filter(|e| e.tick == tick)
            .cloned()
            .collect();
        for event in due {
            if self.config.mode == Mode::Tr && !event.kind.valid_in_tr_mode() {
                self.trace.notices.push(format!(
                    "skipped {} event at tick {} (tr mode)",
                    event.kind.name(),
                    tick
                ));
                continue;
            }
            match &event.kind {
                crate::adversary::EventKind::TamperRt { node, .. } => {
                    self.cause_log.push((tick, node.clone(), ViolationKind::RtChanged));
                }
                crate::adversary::EventKind::TamperLabel { node, .. } => {
                    self.cause_log.push((tick, node.clone(), ViolationKind::LabelMismatch));
                }
                _ => {}
            }
            let mut tunnels: Vec<&mut Tunnel> = self
                .flows
                .iter_mut()
                .filter(|f| !(f.delivered + f.dropped == f.demand.packets && f.pending.is_empty()))
                .filter_map(|f| match &mut f.phase {
                    FlowPhase::Vpn(tunnel) => Some(tunnel),
                    _ => None,
                })
                .collect();
            let records = apply_event(&event, &mut self.graph, &mut tunnels, tick)
                .expect("scenario validation admits only applicable events");
            self.trace.mutations.extend(records);
        }
    }

    /// Polls sessions one at a time in id order, handling each detection
    /// before the next poll so cascaded reroutes are visible downstream.
    fn poll_sessions(&mut self, tick: Tick) {
        for i in 0..self.flows.len() {
            let verdict = match &self.flows[i].phase {
                FlowPhase::Tr(session) if session.state == SessionState::Transferring => {
                    poll(session, &self.graph, tick, &self.schedule)
                }
                _ => continue,
            };
            if let Some(violation) = verdict.violation() {
                let violation = violation.clone();
                self.handle_detection(i, &violation, tick);
            }
        }
    }

    /// Halt the violated session, drop its in-flight packets for
    /// retransmission, mark the offender compromised, and re-prepare. Every
    /// other session routed through the offender is halted and re-prepared
    /// too, so no packet ever crosses a known-hostile device.
    fn handle_detection(&mut self, flow_idx: usize, violation: &RouteViolation, tick: Tick) {
        self.detections.push(Detection {
            tick,
            node: violation.node.clone(),
            kind: violation.kind,
        });
        if let FlowPhase::Tr(session) = &mut self.flows[flow_idx].phase {
            session.state = SessionState::Halted {
                kind: violation.kind,
                node: violation.node.clone(),
                tick,
            };
        }
        self.trace.halts.push(HaltRecord {
            flow: self.flows[flow_idx].id,
            detection_tick: tick,
            resume_tick: None,
        });
        self.drop_in_flight(flow_idx);
        if let Some(node) = self.graph.node_mut(&violation.node) {
            node.trust = TrustState::Compromised { since_tick: tick };
        }
        self.reroute(flow_idx, tick);

        // Cascade to every other active session whose route uses the node.
        for j in 0..self.flows.len() {
            if j == flow_idx {
                continue;
            }
            let affected = match &self.flows[j].phase {
                FlowPhase::Tr(session) => {
                    !session.state.is_terminal() && session.plan.path.contains(&violation.node)
                }
                _ => false,
            };
            if affected {
                self.trace.halts.push(HaltRecord {
                    flow: self.flows[j].id,
                    detection_tick: tick,
                    resume_tick: None,
                });
                self.drop_in_flight(j);
                self.reroute(j, tick);
            }
        }
    }

    /// Removes a flow's in-flight packets and re-enqueues them for
    /// retransmission, lowest sequence first.
    fn drop_in_flight(&mut self, flow_idx: usize) {
        let flow_id = self.flows[flow_idx].id;
        let mut dropped_seqs: Vec<u64> = Vec::new();
        self.in_flight.retain(|p| {
            if p.flow == flow_id {
                dropped_seqs.push(p.seq);
                false
            } else {
                true
            }
        });
        dropped_seqs.sort_unstable();
        let flow = &mut self.flows[flow_idx];
        flow.dropped += dropped_seqs.len() as u64;
        for seq in dropped_seqs.into_iter().rev() {
            flow.pending.push_front(seq);
        }
        if let FlowPhase::Tr(session) = &mut flow.phase {
            session.packets_in_flight = 0;
            session.packets_pending = flow.pending.len() as u64;
        }
    }

    /// Recomputes a trusted route for the session, zombifying as required.
    fn reroute(&mut self, flow_idx: usize, tick: Tick) {
        let (sender, receiver) = {
            let flow = &self.flows[flow_idx];
            (flow.demand.src.clone(), flow.demand.dst.clone())
        };
        let outcome = compute_trusted_route(&self.graph, &sender, &receiver, &self.policy);
        if let FlowPhase::Tr(session) = &mut self.flows[flow_idx].phase {
            match outcome {
                Ok(plan) => {
                    let mut ready = tick;
                    for node_id in &plan.zombify_set {
                        let since = zombify(&mut self.graph, node_id, &self.policy, &self.schedule, tick)
                            .expect("zombify_set members are untrusted and zombifiable");
                        ready = ready.max(since);
                        self.zombification_count += 1;
                    }
                    session.plan = plan;
                    session.ready_tick = ready;
                    session.state = SessionState::Rerouting;
                    self.reroute_count += 1;
                }
                Err(_) => {
                    session.state = SessionState::Failed {
                        reason: "NoTrustedRoute".into(),
                    };
                }
            }
        }
    }

    /// Creates flows whose demands start now, finalizes sessions whose
    /// zombifications became effective, and departs one packet per active
    /// flow.
    fn progress_flows(&mut self, tick: Tick) {
        for i in 0..self.flows.len() {
            if matches!(self.flows[i].phase, FlowPhase::NotStarted)
                && self.flows[i].demand.start_tick == tick
            {
                self.start_flow(i, tick);
            }
            // Preparing or rerouting sessions become transferring once every
            // zombification is effective.
            let ready = match &self.flows[i].phase {
                FlowPhase::Tr(session) => {
                    matches!(session.state, SessionState::Preparing | SessionState::Rerouting)
                        && session.ready_tick <= tick
                }
                _ => false,
            };
            if ready {
                let was_rerouting = matches!(
                    &self.flows[i].phase,
                    FlowPhase::Tr(s) if s.state == SessionState::Rerouting
                );
                if let FlowPhase::Tr(session) = &mut self.flows[i].phase {
                    finalize_session(&self.graph, session, tick);
                }
                if was_rerouting {
                    let flow_id = self.flows[i].id;
                    if let Some(halt) = self
                        .trace
                        .halts
                        .iter_mut()
                        .rev()
                        .find(|h| h.flow == flow_id && h.resume_tick.is_none())
                    {
                        halt.resume_tick = Some(tick);
                    }
                }
            }
            self.depart_one(i, tick);
        }
    }

    fn start_flow(&mut self, flow_idx: usize, tick: Tick) {
        let demand = self.flows[flow_idx].demand.clone();
        let id = self.flows[flow_idx].id;
        self.flows[flow_idx].pending = (0..demand.packets).collect();
        match self.config.mode {
            Mode::Tr => {
                let session = prepare_session(
                    &mut self.graph,
                    id,
                    &demand.src,
                    &demand.dst,
                    &self.policy,
                    &self.schedule,
                    tick,
                );
                if !matches!(session.state, SessionState::Failed { .. }) {
                    self.zombification_count += session.plan.zombify_set.len() as u64;
                }
                self.flows[flow_idx].phase = FlowPhase::Tr(session);
            }
            Mode::Vpn => {
                let tunnel = establish_tunnel(&self.graph, &demand.src, &demand.dst, id)
                    .expect("routing tables were built, so the graph is connected");
                self.flows[flow_idx].phase = FlowPhase::Vpn(tunnel);
            }
        }
        if let FlowPhase::Tr(session) = &mut self.flows[flow_idx].phase {
            session.packets_pending = demand.packets;
        }
    }

    /// One departure per flow per tick while it has pending packets: the
    /// sender emits a steady stream rather than a burst.
    fn depart_one(&mut self, flow_idx: usize, tick: Tick) {
        let path: Arc<Vec<NodeId>> = match &self.flows[flow_idx].phase {
            FlowPhase::Tr(session) if session.state == SessionState::Transferring => {
                Arc::new(session.plan.path.clone())
            }
            FlowPhase::Vpn(tunnel) => Arc::new(tunnel.path.clone()),
            _ => return,
        };
        let flow = &mut self.flows[flow_idx];
        let Some(seq) = flow.pending.pop_front() else {
            return;
        };
        flow.sent += 1;
        let first_hop = path[1].clone();
        let latency = self
            .graph
            .link_latency(&path[0], &first_hop)
            .expect("consecutive route nodes are linked");
        let packet = Packet {
            flow: flow.id,
            seq,
            path: Arc::clone(&path),
            next_idx: 1,
            arrive_tick: tick + latency,
            encrypted: match self.config.mode {
                Mode::Tr => flow.demand.encrypted,
                Mode::Vpn => true,
            },
            malicious: flow.demand.malicious,
        };
        self.trace.departures.push(DepartureRecord {
            tick,
            flow: flow.id,
            seq,
        });
        if let FlowPhase::Tr(session) = &mut flow.phase {
            session.packets_pending = flow.pending.len() as u64;
            session.packets_in_flight += 1;
        }
        let terminal = path.last().unwrap().clone();
        self.graph
            .node_mut(&path[0])
            .unwrap()
            .log_forward(tick, packet.flow, terminal, first_hop);
        self.in_flight.push(packet);
    }

    fn move_packets(&mut self, tick: Tick) {
        let mut arriving: Vec<Packet> = Vec::new();
        self.in_flight.retain_mut(|p| {
            if p.arrive_tick == tick {
                arriving.push(p.clone());
                false
            } else {
                true
            }
        });
        arriving.sort_by_key(|p| (p.flow, p.seq));
        for mut packet in arriving {
            let node = packet.path[packet.next_idx].clone();
            let terminal = packet.next_idx == packet.path.len() - 1;
            let flow_idx = packet.flow as usize;
            let intended = self.flows[flow_idx].demand.dst.clone();

            let observable = match self.config.mode {
                Mode::Tr => !packet.encrypted,
                // Tunnel payloads surface only at an imposter endpoint.
                Mode::Vpn => terminal && node != intended,
            };
            if let Some(ids) = &mut self.ids {
                let sight = PacketSight {
                    flow: packet.flow,
                    seq: packet.seq,
                    observable,
                    malicious: packet.malicious,
                };
                ids_observe(ids, &sight, &node, tick);
            }

            if terminal {
                let flow = &mut self.flows[flow_idx];
                if self.config.mode == Mode::Vpn && node != intended {
                    // Consumed by a rogue gateway: decrypted at the imposter.
                    self.plaintext_exposures.record(&node);
                    flow.dropped += 1;
                } else {
                    flow.delivered += 1;
                    if let FlowPhase::Tr(session) = &mut flow.phase {
                        session.packets_delivered += 1;
                        session.packets_in_flight -= 1;
                    }
                }
                continue;
            }

            self.trace.transits.push(TransitRecord {
                tick,
                node: node.clone(),
                flow: packet.flow,
                seq: packet.seq,
            });
            let trust = self.graph.node(&node).unwrap().trust;
            match self.config.mode {
                Mode::Tr => {
                    if trust.is_compromised() {
                        if packet.encrypted {
                            self.ciphertext_exposures.record(&node);
                        } else {
                            self.plaintext_exposures.record(&node);
                        }
                    }
                }
                Mode::Vpn => {
                    if matches!(trust, TrustState::Untrusted) || trust.is_compromised() {
                        self.ciphertext_exposures.record(&node);
                    }
                }
            }

            let next = packet.path[packet.next_idx + 1].clone();
            let latency = self
                .graph
                .link_latency(&node, &next)
                .expect("consecutive route nodes are linked");
            let terminal_id = packet.path.last().unwrap().clone();
            self.graph
                .node_mut(&node)
                .unwrap()
                .log_forward(tick, packet.flow, terminal_id, next);
            packet.next_idx += 1;
            packet.arrive_tick = tick + latency;
            self.in_flight.push(packet);
        }
    }

    fn settle(&mut self, _tick: Tick) {
        for flow in &mut self.flows {
            if let FlowPhase::Tr(session) = &mut flow.phase {
                if session.state == SessionState::Transferring
                    && flow.delivered == flow.demand.packets
                {
                    debug_assert!(flow.pending.is_empty());
                    debug_assert_eq!(session.packets_in_flight, 0);
                    session.state = SessionState::Completed;
                }
            }
        }
    }

    fn finished(&self) -> bool {
        !self.flows.is_empty()
            && self.in_flight.is_empty()
            && self.flows.iter().all(|f| f.is_terminal())
    }

    fn into_report(self, ticks_run: u64) -> (MetricsReport, RunTrace) {
        let mut detections = self.detections;
        detections.sort();
        let max_detection_latency = detections
            .iter()
            .filter_map(|d| {
                self.cause_log
                    .iter()
                    .filter(|(t, n, k)| *t <= d.tick && *n == d.node && *k == d.kind)
                    .map(|(t, _, _)| d.tick - t)
                    .min()
            })
            .max()
            .unwrap_or(0);
        let sessions: Vec<SessionSummary> = self
            .flows
            .iter()
            .map(|f| SessionSummary {
                id: f.id,
                sender: f.demand.src.clone(),
                receiver: f.demand.dst.clone(),
                state: f.state_string(),
                packets: f.demand.packets,
                sent: f.sent,
                delivered: f.delivered,
                dropped: f.dropped,
            })
            .collect();
        let report = MetricsReport {
            mode: self.config.mode,
            seed: self.config.seed,
            ticks_run,
            packets_sent: self.flows.iter().map(|f| f.sent).sum(),
            packets_delivered: self.flows.iter().map(|f| f.delivered).sum(),
            packets_dropped: self.flows.iter().map(|f| f.dropped).sum(),
            packets_in_flight: self.in_flight.len() as u64,
            plaintext_exposures: self.plaintext_exposures,
            ciphertext_exposures: self.ciphertext_exposures,
            detections,
            max_detection_latency,
            reroute_count: self.reroute_count,
            zombification_count: self.zombification_count,
            ids_alert_count: self.ids.as_ref().map_or(0, |i| i.alerts.len() as u64),
            sessions,
        };
        (report, self.trace)
    }
}
