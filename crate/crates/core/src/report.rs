//! Run reports and their canonical JSON form.
//!
//! The canonical form has lexicographically sorted object keys, integer
//! numbers only, two-space indentation and a trailing newline, so emitting a
//! parsed report reproduces it byte for byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fault::CampaignRow;
use crate::hpc::MasterKind;
use crate::kernel::Cycle;
use crate::observability::TraceKind;
use crate::redundancy::{Mismatch, PairStats};
use crate::safety::{IntegrationKind, Verdict};
use crate::watchdog::ArmingRecord;

pub const SCHEMA: &str = "sisim.run_report.v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterEntry {
    pub name: String,
    pub kind: MasterKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceReport {
    /// victim -> aggressor -> wait cycles.
    pub matrix: BTreeMap<String, BTreeMap<String, u64>>,
    pub caused: BTreeMap<String, u64>,
    pub suffered: BTreeMap<String, u64>,
    pub total_wait_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterruptEntry {
    /// `quota`, `watchdog` or `mismatch`.
    pub kind: String,
    pub subject: String,
    pub detail: String,
    pub raised_at: Cycle,
    pub handled_at: Cycle,
    pub effect_at: Cycle,
    pub action: String,
    /// Whether the action landed before the run ended.
    pub applied: bool,
    /// Index of the fault this interrupt was attributed to.
    pub fault: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterTxnStats {
    pub issued: u64,
    pub completed: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub wait_cycles: u64,
    pub held_cycles: u64,
    pub max_response: Cycle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnSummary {
    pub issued: u64,
    pub completed: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub per_master: BTreeMap<String, MasterTxnStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub at: Cycle,
    pub kind: TraceKind,
    pub master: Option<String>,
    pub address: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterEntry {
    pub kind: TraceKind,
    pub master: Option<String>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceReport {
    pub capacity: u64,
    pub pushed: u64,
    pub snapshot: Vec<TraceEntry>,
    pub counters: Vec<CounterEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairReport {
    pub head: String,
    pub trail: String,
    pub threshold: u64,
    pub stats: PairStats,
    pub mismatch: Option<Mismatch>,
    pub resets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchdogReport {
    pub deadline: Cycle,
    pub target: String,
    pub armings: u64,
    pub satisfied: u64,
    pub expired: u64,
    pub history: Vec<ArmingRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FttiEntry {
    pub fault: usize,
    pub target: String,
    pub t_fault: Cycle,
    pub t_detect: Option<Cycle>,
    pub t_mitigated: Option<Cycle>,
    /// Absent when the fault never took effect.
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    /// `pass`, `fail` or `none` when no fault was judged.
    pub ftti: String,
    pub budget: Cycle,
    pub safe_state_at: Option<Cycle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub seed: u64,
    pub horizon: Cycle,
    pub final_cycle: Cycle,
    pub mode: IntegrationKind,
    pub masters: Vec<MasterEntry>,
    pub interference: InterferenceReport,
    pub interrupts: Vec<InterruptEntry>,
    pub transactions: TxnSummary,
    pub traces: BTreeMap<String, TraceReport>,
    pub pairs: BTreeMap<String, PairReport>,
    pub watchdogs: BTreeMap<String, WatchdogReport>,
    pub ftti: Vec<FttiEntry>,
    pub campaign: Vec<CampaignRow>,
    pub verdicts: Verdicts,
    pub anomalies: Vec<String>,
    pub events_processed: u64,
    /// FNV-1a digest of the processed event sequence.
    pub event_log_digest: String,
}

impl RunReport {
    pub fn ftti_failed(&self) -> bool {
        self.verdicts.ftti == "fail"
    }
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, canonical(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// Canonical JSON text of any serializable value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut text = serde_json::to_string_pretty(&canonical(v)).expect("values serialize");
    text.push('\n');
    text
}

pub fn emit_report(report: &RunReport) -> String {
    to_canonical_json(report)
}

pub fn parse_report(text: &str) -> Result<RunReport, serde_json::Error> {
    serde_json::from_str(text)
}
