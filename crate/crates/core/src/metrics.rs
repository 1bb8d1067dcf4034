//! Run reports: delivery, exposure, detection-latency, reroute and IDS-alert
//! counters, serialized byte-stably.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::monitor::ViolationKind;
use crate::scenario::Mode;
use crate::topology::{NodeId, Tick};

/// Exposure tally with a per-node breakdown, keyed and sorted by node id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureCounts {
    pub total: u64,
    pub by_node: BTreeMap<NodeId, u64>,
}

impl ExposureCounts {
    pub fn record(&mut self, node: &NodeId) {
        self.total += 1;
        *self.by_node.entry(node.clone()).or_default() += 1;
    }
}

/// One monitor detection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Detection {
    pub tick: Tick,
    pub node: NodeId,
    pub kind: ViolationKind,
}

/// Final state of one flow (a trusted session or a tunnel).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub state: String,
    pub packets: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Complete result of one run. Arrays are sorted (detections by tick then
/// node, breakdowns by node id) so serialization is byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub ticks_run: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub packets_in_flight: u64,
    pub plaintext_exposures: ExposureCounts,
    pub ciphertext_exposures: ExposureCounts,
    pub detections: Vec<Detection>,
    pub max_detection_latency: u64,
    pub reroute_count: u64,
    pub zombification_count: u64,
    pub ids_alert_count: u64,
    pub sessions: Vec<SessionSummary>,
}

impl MetricsReport {
    pub fn total_exposures(&self) -> u64 {
        self.plaintext_exposures.total + self.ciphertext_exposures.total
    }

    /// Canonical JSON: fixed key order, sorted arrays, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Side-by-side result of running one scenario in both modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tr: MetricsReport,
    pub vpn: MetricsReport,
    pub deltas: ComparisonDeltas,
}

/// Headline differences between the two arms.
///
/// `exposure_diff` is vpn total exposures minus tr total exposures;
/// `delivered_diff` is tr deliveries minus vpn deliveries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonDeltas {
    pub exposure_diff: i64,
    pub delivered_diff: i64,
    pub tr_detections: u64,
    pub vpn_detections: u64,
}

impl ComparisonReport {
    pub fn new(tr: MetricsReport, vpn: MetricsReport) -> Self {
        let deltas = ComparisonDeltas {
            exposure_diff: vpn.total_exposures() as i64 - tr.total_exposures() as i64,
            delivered_diff: tr.packets_delivered as i64 - vpn.packets_delivered as i64,
            tr_detections: tr.detections.len() as u64,
            vpn_detections: vpn.detections.len() as u64,
        };
        ComparisonReport { tr, vpn, deltas }
    }

    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
