#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sisim::observability::{TraceEvent, TraceFilter, TraceKind};
use sisim::scenario::{parse, ScenarioConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn config(doc: &Value) -> ScenarioConfig {
    match parse(&doc.to_string()) {
        Ok(c) => c,
        Err(e) => panic!("test scenario rejected: {e}\n{doc:#}"),
    }
}

// ---------------------------------------------------------------------------
// Random bus schedules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Txn {
    pub master: usize,
    pub at: u64,
    pub size: u64,
    pub burst: bool,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub masters: usize,
    pub fixed_priority: bool,
    pub txns: Vec<Txn>,
}

/// Sizes covered by the default latency table.
const SINGLE_SIZES: [u64; 5] = [1, 4, 8, 12, 16];
const BURST_SIZES: [u64; 4] = [8, 16, 32, 64];

pub fn random_schedule(seed: u64) -> Schedule {
    let mut r = rng(seed);
    let masters = r.random_range(1..=4);
    let n = r.random_range(1..=20);
    let mut txns: Vec<Txn> = (0..n)
        .map(|_| {
            let burst = r.random_bool(0.4);
            Txn {
                master: r.random_range(0..masters),
                at: r.random_range(0..60),
                size: if burst {
                    BURST_SIZES[r.random_range(0..BURST_SIZES.len())]
                } else {
                    SINGLE_SIZES[r.random_range(0..SINGLE_SIZES.len())]
                },
                burst,
            }
        })
        .collect();
    txns.sort_by_key(|t| t.at);
    Schedule {
        masters,
        fixed_priority: seed % 2 == 1,
        txns,
    }
}

/// Corpus of criterion 1: both policies appear, alternating by seed.
pub fn corpus() -> Vec<Schedule> {
    (0..200).map(|i| random_schedule(0xC0FFEE + i)).collect()
}

pub fn schedule_doc(s: &Schedule, horizon: u64) -> Value {
    let masters: Vec<Value> = (0..s.masters)
        .map(|m| {
            let items: Vec<Value> = s
                .txns
                .iter()
                .filter(|t| t.master == m)
                .map(|t| json!({"at": t.at, "op": "read", "size_bytes": t.size, "burst": t.burst}))
                .collect();
            json!({"name": format!("m{m}"), "workload": {"explicit": items}})
        })
        .collect();
    json!({
        "horizon": horizon,
        "masters": masters,
        "interconnect": {"arbitration": if s.fixed_priority { "fixed_priority" } else { "round_robin" }},
    })
}

// ---------------------------------------------------------------------------
// Oracle: per-cycle brute-force bus re-simulation
// ---------------------------------------------------------------------------

/// Default interconnect timing, written out independently of the model.
pub fn oracle_duration(size: u64, burst: bool) -> u64 {
    if burst {
        if size <= 16 {
            7
        } else if size <= 32 {
            11
        } else {
            19
        }
    } else {
        let beats = size.div_ceil(4);
        beats * 4
    }
}

#[derive(Debug, Clone, Default)]
pub struct OracleRun {
    /// cells[victim][aggressor]
    pub cells: Vec<Vec<u64>>,
    pub total: u64,
    /// (cycle, victim, aggressor) for every waiting transaction-cycle, in cycle order.
    pub waits: Vec<(u64, usize, usize)>,
    /// Completion cycle per transaction (schedule order).
    pub completion: Vec<Option<u64>>,
}

/// Walks every cycle: the bus frees at the end of an occupancy, new arrivals
/// join per-master FIFOs, a free bus is granted by the policy and every
/// queued transaction of another master accrues one wait cycle.
pub fn brute_force(s: &Schedule, horizon: u64) -> OracleRun {
    let n = s.masters;
    let mut out = OracleRun {
        cells: vec![vec![0; n]; n],
        completion: vec![None; s.txns.len()],
        ..Default::default()
    };
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); n];
    let mut busy: Option<(usize, u64, usize)> = None; // (master, end, txn)
    let mut rr_last: Option<usize> = None;
    for c in 0..horizon {
        if let Some((_, end, t)) = busy {
            if end <= c {
                out.completion[t] = Some(end);
                busy = None;
            }
        }
        for (i, t) in s.txns.iter().enumerate() {
            if t.at == c {
                queues[t.master].push_back(i);
            }
        }
        if busy.is_none() {
            let ready: Vec<usize> = (0..n).filter(|&m| !queues[m].is_empty()).collect();
            if !ready.is_empty() {
                let pick = if s.fixed_priority {
                    ready[0]
                } else {
                    let start = rr_last.map_or(0, |l| l + 1);
                    *ready.iter().find(|&&m| m >= start).unwrap_or(&ready[0])
                };
                rr_last = Some(pick);
                let t = queues[pick].pop_front().unwrap();
                let tx = &s.txns[t];
                busy = Some((pick, c + oracle_duration(tx.size, tx.burst), t));
            }
        }
        if let Some((occ, _, _)) = busy {
            for (m, q) in queues.iter().enumerate() {
                if m != occ {
                    for _ in 0..q.len() {
                        out.cells[m][occ] += 1;
                        out.total += 1;
                        out.waits.push((c, m, occ));
                    }
                }
            }
        }
    }
    if let Some((_, end, t)) = busy {
        if end < horizon {
            out.completion[t] = Some(end);
        }
    }
    out
}

/// Horizon comfortably past the last possible completion of a schedule.
pub fn drain_horizon(s: &Schedule) -> u64 {
    let last = s.txns.iter().map(|t| t.at).max().unwrap_or(0);
    let work: u64 = s.txns.iter().map(|t| oracle_duration(t.size, t.burst)).sum();
    last + work + 1
}

/// First cycle at which the running aggregate exceeds `limit`, scanning wait
/// records one by one; `caused` selects aggressor or victim aggregation.
pub fn first_exceedance(waits: &[(u64, usize, usize)], subject: usize, caused: bool, limit: u64) -> Option<u64> {
    let mut count = 0;
    for &(c, v, a) in waits {
        let hit = if caused { a == subject } else { v == subject };
        if hit {
            count += 1;
            if count > limit {
                return Some(c);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Oracle: observer recount
// ---------------------------------------------------------------------------

pub fn filter_accepts(f: &TraceFilter, e: &TraceEvent) -> bool {
    if !f.kinds.is_empty() && !f.kinds.iter().any(|k| *k == e.kind) {
        return false;
    }
    if !f.masters.is_empty() {
        match e.master {
            Some(m) if f.masters.iter().any(|x| *x == m) => {}
            _ => return false,
        }
    }
    if let Some((lo, hi)) = f.address_range {
        match e.address {
            Some(a) if lo <= a && a <= hi => {}
            _ => return false,
        }
    }
    true
}

pub fn recount(f: &TraceFilter, log: &[TraceEvent]) -> BTreeMap<(TraceKind, Option<usize>), u64> {
    let mut counts = BTreeMap::new();
    for e in log.iter().filter(|e| filter_accepts(f, e)) {
        *counts.entry((e.kind, e.master.map(|m| m.0))).or_insert(0) += 1;
    }
    counts
}

pub fn last_n(f: &TraceFilter, log: &[TraceEvent], n: usize) -> Vec<TraceEvent> {
    let matching: Vec<&TraceEvent> = log.iter().filter(|e| filter_accepts(f, e)).collect();
    matching[matching.len().saturating_sub(n)..]
        .iter()
        .map(|e| (*e).clone())
        .collect()
}

// ---------------------------------------------------------------------------
// Oracle: FTTI from a raw trace scan
// ---------------------------------------------------------------------------

pub fn field<'a>(detail: &'a str, key: &str) -> Option<&'a str> {
    detail
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|rest| rest.strip_prefix('=')))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedFtti {
    pub t_fault: u64,
    pub t_detect: Option<u64>,
    pub t_mitigated: Option<u64>,
    /// None for pass, Some(overshoot) for fail.
    pub overshoot: Option<u64>,
}

/// Recomputes the FTTI record of a single-fault run from the raw trace: the
/// fault injection, the first interrupt that names the faulted component, and
/// the action that interrupt triggered.
pub fn scan_ftti(cfg: &ScenarioConfig, log: &[TraceEvent]) -> Option<ScannedFtti> {
    let inject = log.iter().find(|e| e.kind == TraceKind::FaultInject)?;
    let t_fault = inject.at;
    let words: Vec<&str> = inject.detail.split_whitespace().collect();
    // "fault=K <kind> <subject> @at"
    let kind = words[1];
    let subject = words[2];
    let names = cfg.master_names();
    let relevant = |e: &TraceEvent| -> bool {
        match (kind, e.kind) {
            ("store_value", TraceKind::Mismatch) => {
                let pair = subject.split('.').next().unwrap();
                field(&e.detail, "pair") == Some(pair)
            }
            ("crash", TraceKind::WatchdogExpiry) => {
                let id = field(&e.detail, "id").unwrap();
                let w = cfg.watchdogs.iter().find(|w| w.id == id).unwrap();
                match &w.target {
                    sisim::watchdog::WatchdogTarget::Heartbeat(m) => names[m.0] == subject,
                    sisim::watchdog::WatchdogTarget::ChallengeResponse { via, .. } => names[via.0] == subject,
                }
            }
            ("crash", TraceKind::Mismatch) => {
                let pair = field(&e.detail, "pair").unwrap();
                let p = cfg.pairs.iter().find(|p| p.id == pair).unwrap();
                names[p.head.0] == subject || names[p.trail.0] == subject
            }
            ("device_mute", TraceKind::WatchdogExpiry) => {
                let id = field(&e.detail, "id").unwrap();
                let w = cfg.watchdogs.iter().find(|w| w.id == id).unwrap();
                matches!(&w.target, sisim::watchdog::WatchdogTarget::ChallengeResponse { device, .. } if device == subject)
            }
            _ => false,
        }
    };
    let raise = log.iter().filter(|e| e.at >= t_fault).find(|e| relevant(e));
    let lat = cfg.integration.active();
    let t_detect = raise.map(|e| e.at + lat.observe_latency);
    let t_mitigated = raise.and_then(|r| {
        let irq = field(&r.detail, "irq").unwrap();
        log.iter()
            .find(|e| e.kind == TraceKind::ActionEffect && field(&e.detail, "irq") == Some(irq))
            .map(|e| e.at)
    });
    let overshoot = match t_mitigated {
        Some(m) if m - t_fault <= cfg.ftti_budget => None,
        Some(m) => Some(m - t_fault - cfg.ftti_budget),
        None => Some(cfg.horizon - t_fault),
    };
    Some(ScannedFtti {
        t_fault,
        t_detect,
        t_mitigated,
        overshoot,
    })
}

// ---------------------------------------------------------------------------
// Scenario builders
// ---------------------------------------------------------------------------

/// Two cores in a redundant pair plus optional background masters.
pub fn pair_doc(threshold: u64, poll: u64, store_rate: u64, length: u64, seed: u64, background: usize, horizon: u64) -> Value {
    let mut masters = vec![json!({"name": "head"}), json!({"name": "trail"})];
    for b in 0..background {
        masters.push(json!({"name": format!("bg{b}"), "workload": {"synthetic": {
            "period": 40 + 10 * b as u64, "jitter": 9, "op": "read", "size_bytes": 32, "burst": true}}}));
    }
    json!({
        "horizon": horizon,
        "seed": seed,
        "masters": masters,
        "redundant_pairs": [{
            "id": "p0", "head": "head", "trail": "trail",
            "threshold": threshold, "poll_period": poll,
            "stream": {"synthetic": {"length": length, "store_rate_percent": store_rate}}
        }],
    })
}
