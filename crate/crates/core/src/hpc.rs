//! HPC island model: bus masters issuing transactions through one shared
//! interconnect with pluggable arbitration and per-cycle occupancy.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Cycle, EventKind, EventPayload, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterId(pub usize);

impl fmt::Display for MasterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MasterKind {
    Core,
    Accelerator,
    Dma,
    Injector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Master {
    pub id: MasterId,
    pub name: String,
    pub kind: MasterKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Memory,
    Device(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub master: MasterId,
    pub op: Op,
    pub size_bytes: u64,
    pub burst: bool,
    pub issue: Cycle,
    pub target: Target,
    pub address: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("no latency entry covers a {size}-byte burst")]
    NoLatencyEntry { size: u64 },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("transaction size must be positive")]
    ZeroSize,
    #[error("duplicate transaction id {0:?}")]
    DuplicateId(TxnId),
    #[error("transaction {id:?} issued at {issue} but the clock is at {now}")]
    IssueInPast { id: TxnId, issue: Cycle, now: Cycle },
    #[error("unknown master {0}")]
    UnknownMaster(MasterId),
    #[error("unknown transaction {0:?}")]
    UnknownTxn(TxnId),
    #[error("occupancy queried at cycle {cycle} beyond simulated time {now}")]
    BeyondNow { cycle: Cycle, now: Cycle },
}

/// Per-size service latencies of the interconnect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTable {
    /// Bytes moved per beat.
    pub beat_width: u64,
    /// Cycles for one non-burst beat.
    pub single_beat: Cycle,
    /// Burst size in bytes -> cycles; a burst uses the smallest entry that covers it.
    pub burst: BTreeMap<u64, Cycle>,
    /// Fixed response latency of each non-memory target.
    #[serde(default)]
    pub devices: BTreeMap<String, Cycle>,
}

impl Default for LatencyTable {
    fn default() -> Self {
        Self {
            beat_width: 4,
            single_beat: 4,
            burst: BTreeMap::from([(16, 7), (32, 11), (64, 19)]),
            devices: BTreeMap::new(),
        }
    }
}

impl LatencyTable {
    pub fn lookup(&self, target: &Target, size_bytes: u64, burst: bool) -> Result<Cycle, BusError> {
        if size_bytes == 0 {
            return Err(BusError::ZeroSize);
        }
        if let Target::Device(label) = target {
            return self
                .devices
                .get(label)
                .copied()
                .ok_or_else(|| BusError::UnknownDevice(label.clone()));
        }
        if burst {
            self.burst
                .range(size_bytes..)
                .next()
                .map(|(_, &cycles)| cycles)
                .ok_or(BusError::NoLatencyEntry { size: size_bytes })
        } else {
            let beats = size_bytes.div_ceil(self.beat_width.max(1));
            Ok(beats * self.single_beat)
        }
    }
}

/// Bus occupancy of a transaction, in cycles.
pub fn duration(txn: &Transaction, table: &LatencyTable) -> Result<Cycle, BusError> {
    table.lookup(&txn.target, txn.size_bytes, txn.burst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArbitrationPolicy {
    RoundRobin,
    FixedPriority,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arbiter {
    /// Search starts at `next` and wraps.
    RoundRobin { next: usize },
    /// Lowest index wins, except that `boosted` (if any) outranks everyone.
    FixedPriority { boosted: Option<MasterId> },
}

impl Arbiter {
    pub fn new(policy: ArbitrationPolicy) -> Self {
        match policy {
            ArbitrationPolicy::RoundRobin => Arbiter::RoundRobin { next: 0 },
            ArbitrationPolicy::FixedPriority => Arbiter::FixedPriority { boosted: None },
        }
    }

    /// Picks one of `candidates` (sorted by index, non-empty).
    pub fn choose(&mut self, candidates: &[MasterId]) -> MasterId {
        debug_assert!(!candidates.is_empty());
        match self {
            Arbiter::RoundRobin { next } => {
                let pick = candidates
                    .iter()
                    .copied()
                    .find(|m| m.0 >= *next)
                    .unwrap_or(candidates[0]);
                *next = pick.0 + 1;
                pick
            }
            Arbiter::FixedPriority { boosted } => match boosted {
                Some(b) if candidates.contains(b) => *b,
                _ => candidates[0],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxnStatus {
    Queued,
    Granted,
    Completed,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnRecord {
    pub txn: Transaction,
    pub duration: Cycle,
    pub status: TxnStatus,
    pub grant: Option<Cycle>,
    pub complete: Option<Cycle>,
    /// Cycles spent waiting behind another master's occupancy.
    pub wait: Cycle,
    /// Cycles spent queued for any other reason (own earlier transaction, stall).
    pub held: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub victim: MasterId,
    pub aggressor: MasterId,
    pub cycle: Cycle,
    pub txn: TxnId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub txn: TxnId,
    pub master: MasterId,
    pub start: Cycle,
    /// First cycle after the occupancy, i.e. the completion cycle.
    pub end: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub master: MasterId,
    pub start: Cycle,
    pub end: Cycle,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub grant: Option<Grant>,
    pub waits: Vec<WaitRecord>,
}

/// Shared interconnect state.
#[derive(Debug, Clone)]
pub struct Bus {
    arbiter: Arbiter,
    table: LatencyTable,
    queues: Vec<VecDeque<TxnId>>,
    stalled_until: Vec<Cycle>,
    records: Vec<TxnRecord>,
    index: HashMap<TxnId, usize>,
    occupant: Option<Grant>,
    history: Vec<Occupancy>,
}

impl Bus {
    pub fn new(masters: usize, policy: ArbitrationPolicy, table: LatencyTable) -> Self {
        Self {
            arbiter: Arbiter::new(policy),
            table,
            queues: vec![VecDeque::new(); masters],
            stalled_until: vec![0; masters],
            records: Vec::new(),
            index: HashMap::new(),
            occupant: None,
            history: Vec::new(),
        }
    }

    pub fn table(&self) -> &LatencyTable {
        &self.table
    }

    pub fn arbiter(&self) -> &Arbiter {
        &self.arbiter
    }

    pub fn masters(&self) -> usize {
        self.queues.len()
    }

    pub fn submit(&mut self, txn: Transaction, now: Cycle) -> Result<(), BusError> {
        if txn.issue < now {
            return Err(BusError::IssueInPast {
                id: txn.id,
                issue: txn.issue,
                now,
            });
        }
        if txn.master.0 >= self.queues.len() {
            return Err(BusError::UnknownMaster(txn.master));
        }
        if self.index.contains_key(&txn.id) {
            return Err(BusError::DuplicateId(txn.id));
        }
        let duration = duration(&txn, &self.table)?;
        self.queues[txn.master.0].push_back(txn.id);
        self.index.insert(txn.id, self.records.len());
        self.records.push(TxnRecord {
            txn,
            duration,
            status: TxnStatus::Queued,
            grant: None,
            complete: None,
            wait: 0,
            held: 0,
        });
        Ok(())
    }

    pub fn is_idle(&self) -> bool {
        self.occupant.is_none()
    }

    pub fn has_queued(&self) -> bool {
        self.queues.iter().any(|q| !q.is_empty())
    }

    pub fn current(&self) -> Option<Grant> {
        self.occupant
    }

    fn eligible(&self, master: usize, now: Cycle) -> bool {
        now >= self.stalled_until[master]
    }

    /// Grants the bus if it is idle, then emits one wait record per queued
    /// transaction whose master is blocked by another master's occupancy.
    pub fn step(&mut self, now: Cycle) -> StepOutcome {
        let mut out = StepOutcome::default();
        if self.occupant.is_none() {
            let candidates: Vec<MasterId> = (0..self.queues.len())
                .filter(|&m| !self.queues[m].is_empty() && self.eligible(m, now))
                .map(MasterId)
                .collect();
            if !candidates.is_empty() {
                let master = self.arbiter.choose(&candidates);
                let id = self.queues[master.0].pop_front().expect("candidate queue");
                let rec = &mut self.records[self.index[&id]];
                rec.status = TxnStatus::Granted;
                rec.grant = Some(now);
                rec.held = now - rec.txn.issue - rec.wait;
                let grant = Grant {
                    txn: id,
                    master,
                    start: now,
                    end: now + rec.duration,
                };
                self.history.push(Occupancy {
                    master,
                    start: grant.start,
                    end: grant.end,
                });
                self.occupant = Some(grant);
                out.grant = Some(grant);
            }
        }
        if let Some(occ) = self.occupant {
            for m in 0..self.queues.len() {
                if m == occ.master.0 || !self.eligible(m, now) {
                    continue;
                }
                for id in &self.queues[m] {
                    let rec = &mut self.records[self.index[id]];
                    rec.wait += 1;
                    out.waits.push(WaitRecord {
                        victim: MasterId(m),
                        aggressor: occ.master,
                        cycle: now,
                        txn: *id,
                    });
                }
            }
        }
        out
    }

    /// Releases the bus at the end of `txn`'s occupancy.
    pub fn complete(&mut self, txn: TxnId, now: Cycle) -> Result<&TxnRecord, BusError> {
        match self.occupant {
            Some(g) if g.txn == txn => {
                self.occupant = None;
                let rec = &mut self.records[self.index[&txn]];
                rec.status = TxnStatus::Completed;
                rec.complete = Some(now);
                Ok(rec)
            }
            _ => Err(BusError::UnknownTxn(txn)),
        }
    }

    /// Occupant of the bus at `cycle`; `now` bounds what has been simulated.
    pub fn occupant(&self, cycle: Cycle, now: Cycle) -> Result<Option<MasterId>, BusError> {
        if cycle > now {
            return Err(BusError::BeyondNow { cycle, now });
        }
        let idx = self.history.partition_point(|o| o.start <= cycle);
        Ok(idx
            .checked_sub(1)
            .map(|i| self.history[i])
            .filter(|o| cycle < o.end)
            .map(|o| o.master))
    }

    /// Keeps `master` out of arbitration until `until`.
    pub fn stall(&mut self, master: MasterId, until: Cycle) {
        let slot = &mut self.stalled_until[master.0];
        *slot = (*slot).max(until);
    }

    pub fn stalled_until(&self, master: MasterId) -> Cycle {
        self.stalled_until[master.0]
    }

    /// Removes every queued transaction of `master`; the in-flight one (if any) completes.
    pub fn drop_queued(&mut self, master: MasterId) -> Vec<TxnId> {
        let dropped: Vec<TxnId> = self.queues[master.0].drain(..).collect();
        for id in &dropped {
            self.records[self.index[id]].status = TxnStatus::Dropped;
        }
        dropped
    }

    pub fn boost(&mut self, victim: MasterId) {
        self.arbiter = Arbiter::FixedPriority {
            boosted: Some(victim),
        };
    }

    pub fn record(&self, id: TxnId) -> Option<&TxnRecord> {
        self.index.get(&id).map(|&i| &self.records[i])
    }

    /// Every submitted transaction, in submission order.
    pub fn records(&self) -> &[TxnRecord] {
        &self.records
    }

    pub fn history(&self) -> &[Occupancy] {
        &self.history
    }
}

/// Events of a bus-only run.
#[derive(Debug, Clone)]
enum BusEvent {
    Issue(Transaction),
    Complete(TxnId),
}

impl EventPayload for BusEvent {
    fn kind(&self) -> EventKind {
        match self {
            BusEvent::Issue(_) => EventKind::TxnIssue,
            BusEvent::Complete(_) => EventKind::TxnComplete,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BusRun {
    pub bus: Bus,
    pub waits: Vec<WaitRecord>,
    pub end: Cycle,
}

/// Runs a fixed transaction list over an otherwise empty island until every
/// transaction completes or `horizon` is reached.
pub fn run_bus(
    masters: usize,
    policy: ArbitrationPolicy,
    table: LatencyTable,
    txns: Vec<Transaction>,
    horizon: Cycle,
) -> Result<BusRun, BusError> {
    let mut bus = Bus::new(masters, policy, table);
    let mut kernel: Kernel<BusEvent> = Kernel::new();
    for txn in txns {
        duration(&txn, bus.table())?;
        kernel
            .schedule(txn.issue, BusEvent::Issue(txn))
            .expect("clock at zero");
    }
    let mut waits = Vec::new();
    let mut t = 0;
    while t < horizon {
        kernel.advance_to(t).expect("monotone");
        while let Some(ev) = kernel.pop_due(t) {
            match ev.payload {
                BusEvent::Issue(txn) => bus.submit(txn, t)?,
                BusEvent::Complete(id) => {
                    bus.complete(id, t)?;
                }
            }
        }
        let out = bus.step(t);
        if let Some(g) = out.grant {
            kernel
                .schedule(g.end, BusEvent::Complete(g.txn))
                .expect("grant ends after now");
        }
        waits.extend(out.waits);
        t = if bus.has_queued() {
            t + 1
        } else {
            match kernel.peek_at() {
                Some(next) => next.max(t + 1),
                None => break,
            }
        };
    }
    let end = t.min(horizon);
    kernel.advance_to(end).expect("monotone");
    Ok(BusRun { bus, waits, end })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(id: u64, master: usize, issue: Cycle, size: u64, burst: bool) -> Transaction {
        Transaction {
            id: TxnId(id),
            master: MasterId(master),
            op: Op::Read,
            size_bytes: size,
            burst,
            issue,
            target: Target::Memory,
            address: None,
        }
    }

    #[test]
    fn single_beat_duration() {
        let table = LatencyTable::default();
        assert_eq!(duration(&txn(0, 0, 0, 4, false), &table), Ok(4));
    }

    #[test]
    fn non_burst_takes_one_beat_per_width() {
        let table = LatencyTable::default();
        assert_eq!(duration(&txn(0, 0, 0, 16, false), &table), Ok(16));
        assert_eq!(duration(&txn(0, 0, 0, 5, false), &table), Ok(8));
    }

    #[test]
    fn burst_uses_covering_table_entry() {
        let table = LatencyTable::default();
        assert_eq!(duration(&txn(0, 0, 0, 16, true), &table), Ok(7));
        assert_eq!(duration(&txn(0, 0, 0, 20, true), &table), Ok(11));
        assert_eq!(
            duration(&txn(0, 0, 0, 128, true), &table),
            Err(BusError::NoLatencyEntry { size: 128 })
        );
    }

    #[test]
    fn device_targets_use_their_fixed_latency() {
        let mut table = LatencyTable::default();
        table.devices.insert("devX".into(), 30);
        let mut t = txn(0, 0, 0, 4, false);
        t.target = Target::Device("devX".into());
        assert_eq!(duration(&t, &table), Ok(30));
        t.target = Target::Device("devY".into());
        assert_eq!(duration(&t, &table), Err(BusError::UnknownDevice("devY".into())));
    }

    #[test]
    fn uncontended_transaction_has_no_waits() {
        let run = run_bus(
            2,
            ArbitrationPolicy::RoundRobin,
            LatencyTable::default(),
            vec![txn(0, 0, 0, 4, false)],
            100,
        )
        .unwrap();
        let rec = run.bus.record(TxnId(0)).unwrap();
        assert_eq!(rec.grant, Some(0));
        assert_eq!(rec.complete, Some(4));
        assert!(run.waits.is_empty());
    }

    #[test]
    fn staggered_pair_waits_behind_first() {
        let run = run_bus(
            2,
            ArbitrationPolicy::RoundRobin,
            LatencyTable::default(),
            vec![txn(0, 0, 0, 4, false), txn(1, 1, 1, 4, false)],
            100,
        )
        .unwrap();
        let cycles: Vec<_> = run
            .waits
            .iter()
            .map(|w| (w.victim, w.aggressor, w.cycle))
            .collect();
        assert_eq!(
            cycles,
            vec![
                (MasterId(1), MasterId(0), 1),
                (MasterId(1), MasterId(0), 2),
                (MasterId(1), MasterId(0), 3)
            ]
        );
        let b = run.bus.record(TxnId(1)).unwrap();
        assert_eq!((b.grant, b.complete), (Some(4), Some(8)));
        assert_eq!(run.bus.occupant(2, run.end), Ok(Some(MasterId(0))));
        assert_eq!(run.bus.occupant(5, run.end), Ok(Some(MasterId(1))));
    }

    #[test]
    fn simultaneous_issue_round_robin_favours_lower_index() {
        let run = run_bus(
            2,
            ArbitrationPolicy::RoundRobin,
            LatencyTable::default(),
            vec![txn(0, 1, 0, 4, false), txn(1, 0, 0, 4, false)],
            100,
        )
        .unwrap();
        assert_eq!(run.bus.record(TxnId(1)).unwrap().grant, Some(0));
        assert_eq!(run.waits.len(), 4);
        assert!(run
            .waits
            .iter()
            .all(|w| w.victim == MasterId(1) && w.aggressor == MasterId(0)));
    }

    #[test]
    fn round_robin_rotates_after_a_grant() {
        let mut arb = Arbiter::new(ArbitrationPolicy::RoundRobin);
        let all = [MasterId(0), MasterId(1), MasterId(2)];
        assert_eq!(arb.choose(&all), MasterId(0));
        assert_eq!(arb.choose(&all), MasterId(1));
        assert_eq!(arb.choose(&all), MasterId(2));
        assert_eq!(arb.choose(&all), MasterId(0));
        assert_eq!(arb.choose(&[MasterId(0), MasterId(2)]), MasterId(2));
    }

    #[test]
    fn fixed_priority_honours_boost() {
        let mut arb = Arbiter::new(ArbitrationPolicy::FixedPriority);
        let all = [MasterId(0), MasterId(1), MasterId(2)];
        assert_eq!(arb.choose(&all), MasterId(0));
        assert_eq!(arb.choose(&all), MasterId(0));
        arb = Arbiter::FixedPriority {
            boosted: Some(MasterId(2)),
        };
        assert_eq!(arb.choose(&all), MasterId(2));
        assert_eq!(arb.choose(&all[..2]), MasterId(0));
    }

    #[test]
    fn idle_bus_and_future_queries() {
        let bus = Bus::new(1, ArbitrationPolicy::RoundRobin, LatencyTable::default());
        assert_eq!(bus.occupant(0, 0), Ok(None));
        assert_eq!(bus.occupant(1, 0), Err(BusError::BeyondNow { cycle: 1, now: 0 }));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut bus = Bus::new(1, ArbitrationPolicy::RoundRobin, LatencyTable::default());
        bus.submit(txn(7, 0, 0, 4, false), 0).unwrap();
        assert_eq!(
            bus.submit(txn(7, 0, 0, 4, false), 0),
            Err(BusError::DuplicateId(TxnId(7)))
        );
    }

    #[test]
    fn own_queue_blocking_is_held_not_interference() {
        let run = run_bus(
            1,
            ArbitrationPolicy::RoundRobin,
            LatencyTable::default(),
            vec![txn(0, 0, 0, 4, false), txn(1, 0, 0, 4, false)],
            100,
        )
        .unwrap();
        assert!(run.waits.is_empty());
        let second = run.bus.record(TxnId(1)).unwrap();
        assert_eq!((second.wait, second.held, second.complete), (0, 4, Some(8)));
    }

    #[test]
    fn stalled_master_is_neither_granted_nor_charged() {
        let mut bus = Bus::new(2, ArbitrationPolicy::RoundRobin, LatencyTable::default());
        bus.stall(MasterId(0), 3);
        bus.submit(txn(0, 0, 0, 4, false), 0).unwrap();
        bus.submit(txn(1, 1, 0, 4, false), 0).unwrap();
        let out = bus.step(0);
        assert_eq!(out.grant.unwrap().master, MasterId(1));
        assert!(out.waits.is_empty());
    }
}
