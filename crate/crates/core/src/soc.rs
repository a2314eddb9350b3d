//! The composed island: bus, interference monitor, injectors, redundant pairs,
//! watchdogs, observers and the safety manager on one clock.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{FaultSpec, FaultTarget};
use crate::hpc::{Bus, MasterId, Op, Target, Transaction, TxnId, TxnRecord, TxnStatus, WaitRecord};
use crate::injector::{Cursor, InjectionProgram};
use crate::interference::{InterferenceMonitor, Quota, QuotaInterrupt, QuotaMode};
use crate::kernel::{Cycle, EventKind, EventPayload, Kernel};
use crate::observability::{Observer, TraceEvent, TraceKind};
use crate::redundancy::{InstructionStream, Mismatch, MismatchKind, RedundantPair, TrailRetirement};
use crate::report::{
    CounterEntry, FttiEntry, InterferenceReport, InterruptEntry, MasterEntry, MasterTxnStats, PairReport,
    RunReport, TraceEntry, TraceReport, TxnSummary, Verdicts, WatchdogReport, SCHEMA,
};
use crate::safety::{
    deliver, ftti_check, react, Action, Delivery, FttiRecord, Interrupt, Verdict, WatchedComponent,
};
use crate::scenario::{ScenarioConfig, StreamSpec, WorkItem, Workload};
use crate::watchdog::{TimerState, WatchdogBank, WatchdogTarget};

/// Size of a challenge read and of the default pair store write.
pub const CHALLENGE_BYTES: u64 = 4;

#[derive(Debug, Clone)]
pub enum SocEvent {
    TxnIssue { txn: Transaction, generation: u64 },
    TxnComplete(TxnId),
    QuotaInterrupt(QuotaInterrupt),
    MismatchInterrupt { pair: usize, mismatch: Mismatch },
    WatchdogArm { id: String, retry: bool },
    WatchdogExpiry { id: String, arming: usize },
    FaultInject(usize),
    InjectorEmit { injector: usize, generation: u64 },
    ActionEffect(usize),
}

impl EventPayload for SocEvent {
    fn kind(&self) -> EventKind {
        match self {
            SocEvent::TxnIssue { .. } => EventKind::TxnIssue,
            SocEvent::TxnComplete(_) => EventKind::TxnComplete,
            SocEvent::QuotaInterrupt(_) => EventKind::QuotaInterrupt,
            SocEvent::MismatchInterrupt { .. } => EventKind::MismatchInterrupt,
            SocEvent::WatchdogArm { .. } => EventKind::WatchdogArm,
            SocEvent::WatchdogExpiry { .. } => EventKind::WatchdogExpiry,
            SocEvent::FaultInject(_) => EventKind::FaultInject,
            SocEvent::InjectorEmit { .. } => EventKind::InjectorEmit,
            SocEvent::ActionEffect(_) => EventKind::ActionEffect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub at: Cycle,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaisedInterrupt {
    pub interrupt: Interrupt,
    pub delivery: Delivery,
    pub action: Action,
    pub applied: bool,
    pub fault: Option<usize>,
}

/// Everything a run produced, beyond the report itself.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: RunReport,
    /// Every trace event, unfiltered and unbounded.
    pub trace: Vec<TraceEvent>,
    pub events: Vec<LoggedEvent>,
    pub txns: Vec<TxnRecord>,
    pub waits: Vec<WaitRecord>,
    pub trail_logs: Vec<Vec<TrailRetirement>>,
    pub interrupts: Vec<RaisedInterrupt>,
}

struct InjectorState {
    master: MasterId,
    program: InjectionProgram,
    cursor: Cursor,
    generation: u64,
}

struct PairState {
    pair: RedundantPair,
    resets: u64,
}

#[derive(Default, Clone)]
struct MasterState {
    crashed: bool,
    dropping: bool,
    refused: u64,
    /// Bumped on reset; pending issues of older generations are discarded.
    generation: u64,
    workload: Vec<WorkItem>,
}

#[derive(Clone)]
struct FaultState {
    applied_at: Option<Cycle>,
    interrupt: Option<usize>,
    effective: bool,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    kernel: Kernel<SocEvent>,
    bus: Bus,
    monitor: InterferenceMonitor,
    injectors: Vec<InjectorState>,
    pairs: Vec<PairState>,
    watchdogs: WatchdogBank,
    observers: Vec<Observer>,
    masters: Vec<MasterState>,
    muted: BTreeSet<String>,
    interrupts: Vec<RaisedInterrupt>,
    faults: Vec<FaultState>,
    next_txn: u64,
    events: Vec<LoggedEvent>,
    trace: Vec<TraceEvent>,
    waits: Vec<WaitRecord>,
    anomalies: Vec<String>,
    halted: Option<Cycle>,
}

/// Seeded expansion of a master's workload into issue items below `horizon`.
pub fn expand_workload(workload: &Workload, seed: u64, horizon: Cycle) -> Vec<WorkItem> {
    match workload {
        Workload::Idle => Vec::new(),
        Workload::Explicit(items) => {
            let mut items: Vec<WorkItem> = items.iter().filter(|i| i.at < horizon).cloned().collect();
            items.sort_by_key(|i| i.at);
            items
        }
        Workload::Synthetic(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::new();
            let mut k = 0u64;
            loop {
                let base = s.start + k * s.period;
                if base >= horizon {
                    break;
                }
                let at = base + rng.random_range(0..=s.jitter);
                if at < horizon {
                    out.push(WorkItem {
                        at,
                        op: s.op,
                        size_bytes: s.size_bytes,
                        burst: s.burst,
                        target: s.target.clone(),
                        address: s.base_address.map(|b| b + k * s.size_bytes),
                    });
                }
                k += 1;
            }
            out
        }
    }
}

pub fn pair_stream(config: &ScenarioConfig, pair: usize) -> InstructionStream {
    match &config.pairs[pair].stream {
        StreamSpec::Explicit(body) => InstructionStream { body: body.clone() },
        StreamSpec::Synthetic(s) => InstructionStream::synthetic(
            s.length,
            s.store_rate_percent,
            s.seed
                .unwrap_or_else(|| crate::derive_seed(config.seed, 0x57AE, pair as u64)),
        ),
    }
}

/// Runs a validated scenario and returns its report.
pub fn run(config: &ScenarioConfig) -> RunReport {
    simulate(config).report
}

/// Runs a validated scenario and returns the report with the full logs.
pub fn simulate(config: &ScenarioConfig) -> SimOutcome {
    let mut sim = Sim::new(config);
    sim.run();
    sim.finish()
}

fn fnv1a(hash: &mut u64, bytes: &[u8]) {
    for b in bytes {
        *hash ^= u64::from(*b);
        *hash = hash.wrapping_mul(0x100_0000_01b3);
    }
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let n = cfg.masters.len();
        let mut monitor = InterferenceMonitor::new(n);
        for q in &cfg.quotas {
            monitor
                .add_quota(Quota::new(q.subject, q.limit, q.mode))
                .expect("quotas validated");
        }
        let mut watchdogs = WatchdogBank::new();
        for w in &cfg.watchdogs {
            watchdogs
                .register(&w.id, w.deadline, w.target.clone())
                .expect("watchdogs validated");
        }
        let pairs = (0..cfg.pairs.len())
            .map(|p| PairState {
                pair: RedundantPair::new(cfg.pairs[p].params.clone(), pair_stream(cfg, p), 0)
                    .expect("pairs validated"),
                resets: 0,
            })
            .collect();
        let injectors = cfg
            .injectors
            .iter()
            .map(|i| InjectorState {
                master: i.master,
                program: i.program.clone(),
                cursor: Cursor::new(&i.program),
                generation: 0,
            })
            .collect();
        let observers = cfg
            .observers
            .iter()
            .map(|o| Observer::new(o.name.clone(), o.filter.clone(), o.capacity))
            .collect();
        let mut sim = Sim {
            cfg,
            kernel: Kernel::new(),
            bus: Bus::new(n, cfg.arbitration, cfg.latency.clone()),
            monitor,
            injectors,
            pairs,
            watchdogs,
            observers,
            masters: vec![MasterState::default(); n],
            muted: BTreeSet::new(),
            interrupts: Vec::new(),
            faults: vec![
                FaultState {
                    applied_at: None,
                    interrupt: None,
                    effective: true,
                };
                cfg.faults.len()
            ],
            next_txn: 0,
            events: Vec::new(),
            trace: Vec::new(),
            waits: Vec::new(),
            anomalies: Vec::new(),
            halted: None,
        };
        sim.seed_events();
        sim
    }

    fn schedule(&mut self, at: Cycle, ev: SocEvent) {
        if at < self.cfg.horizon {
            self.kernel.schedule(at, ev).expect("never scheduled in the past");
        }
    }

    fn fresh_id(&mut self) -> TxnId {
        let id = TxnId(self.next_txn);
        self.next_txn += 1;
        id
    }

    fn seed_events(&mut self) {
        let cfg = self.cfg;
        for (m, spec) in cfg.masters.iter().enumerate() {
            let seed = crate::derive_seed(cfg.seed, 0x5757, m as u64);
            self.masters[m].workload = expand_workload(&spec.workload, seed, cfg.horizon);
            self.schedule_workload(MasterId(m), 0);
        }
        for i in 0..self.injectors.len() {
            if let Some(at) = self.injectors[i].cursor.peek(&self.injectors[i].program) {
                self.schedule(
                    at,
                    SocEvent::InjectorEmit {
                        injector: i,
                        generation: 0,
                    },
                );
            }
        }
        for w in &cfg.watchdogs {
            self.schedule(
                w.arm_at,
                SocEvent::WatchdogArm {
                    id: w.id.clone(),
                    retry: false,
                },
            );
        }
        for (k, f) in cfg.faults.iter().enumerate() {
            self.schedule(f.at, SocEvent::FaultInject(k));
        }
    }

    /// Schedules the master's workload, shifted so its first item lands at `origin`
    /// (or unshifted when `origin` is zero).
    fn schedule_workload(&mut self, m: MasterId, origin: Cycle) {
        let items = self.masters[m.0].workload.clone();
        let shift = match items.first() {
            Some(first) if origin > 0 => origin.saturating_sub(first.at),
            _ => 0,
        };
        let generation = self.masters[m.0].generation;
        for item in items {
            let at = item.at + shift;
            let id = self.fresh_id();
            let txn = Transaction {
                id,
                master: m,
                op: item.op,
                size_bytes: item.size_bytes,
                burst: item.burst,
                issue: at,
                target: item.target,
                address: item.address,
            };
            self.schedule(at, SocEvent::TxnIssue { txn, generation });
        }
    }

    fn name(&self, m: MasterId) -> &str {
        &self.cfg.master(m).name
    }

    fn emit(&mut self, at: Cycle, kind: TraceKind, master: Option<MasterId>, address: Option<u64>, detail: String) {
        let ev = TraceEvent {
            at,
            kind,
            master,
            address,
            detail,
        };
        for o in &mut self.observers {
            o.offer(&ev);
        }
        self.trace.push(ev);
    }

    fn run(&mut self) {
        let horizon = self.cfg.horizon;
        let mut t = 0;
        while t < horizon {
            self.kernel.advance_to(t).expect("monotone clock");
            self.drain(t);
            if self.halted.is_some() {
                break;
            }
            self.step(t);
            self.drain(t);
            if self.halted.is_some() {
                break;
            }
            t = if !self.pairs.is_empty() || self.bus.has_queued() {
                t + 1
            } else {
                self.kernel.peek_at().unwrap_or(horizon).max(t + 1)
            };
        }
    }

    fn drain(&mut self, now: Cycle) {
        while let Some(ev) = self.kernel.pop_due(now) {
            self.events.push(LoggedEvent {
                at: ev.at,
                seq: ev.seq,
                kind: ev.kind(),
            });
            self.handle(now, ev.payload);
        }
    }

    fn handle(&mut self, now: Cycle, ev: SocEvent) {
        match ev {
            SocEvent::TxnIssue { txn, generation } => {
                if generation == self.masters[txn.master.0].generation {
                    self.issue(txn, now);
                }
            }
            SocEvent::TxnComplete(id) => self.complete(id, now),
            SocEvent::QuotaInterrupt(q) => self.raise_quota(q, now),
            SocEvent::MismatchInterrupt { pair, mismatch } => {
                let detail = format!(
                    "pair={} index={} kind={}",
                    self.cfg.pairs[pair].id,
                    mismatch.index,
                    match mismatch.kind {
                        MismatchKind::Value => "value",
                        MismatchKind::Missing => "missing",
                    }
                );
                self.raise(
                    now,
                    Interrupt::Mismatch {
                        pair,
                        index: mismatch.index,
                        kind: mismatch.kind,
                    },
                    TraceKind::Mismatch,
                    None,
                    detail,
                );
            }
            SocEvent::WatchdogArm { id, retry } => self.arm(&id, retry, now),
            SocEvent::WatchdogExpiry { id, arming } => self.expire(&id, arming, now),
            SocEvent::FaultInject(k) => self.inject(k, now),
            SocEvent::InjectorEmit {
                injector,
                generation,
            } => self.emit_injection(injector, generation, now),
            SocEvent::ActionEffect(i) => self.apply(i, now),
        }
    }

    // -- bus ---------------------------------------------------------------

    fn issue(&mut self, mut txn: Transaction, now: Cycle) {
        let m = txn.master;
        let state = &mut self.masters[m.0];
        let refused = if state.crashed {
            Some("crashed")
        } else if state.dropping {
            Some("dropped")
        } else {
            None
        };
        if let Some(reason) = refused {
            state.refused += 1;
            self.emit(
                now,
                TraceKind::TxnDropped,
                Some(m),
                txn.address,
                format!("txn={} reason={reason}", txn.id.0),
            );
            return;
        }
        let generation = state.generation;
        let until = self.bus.stalled_until(m);
        if until > now {
            txn.issue = until;
            self.schedule(until, SocEvent::TxnIssue { txn, generation });
            return;
        }
        let detail = format!(
            "txn={} op={} size={} target={}",
            txn.id.0,
            match txn.op {
                Op::Read => "read",
                Op::Write => "write",
            },
            txn.size_bytes,
            match &txn.target {
                Target::Memory => "memory".to_string(),
                Target::Device(d) => d.clone(),
            }
        );
        let address = txn.address;
        txn.issue = now;
        match self.bus.submit(txn, now) {
            Ok(()) => self.emit(now, TraceKind::TxnIssue, Some(m), address, detail),
            Err(e) => self.anomalies.push(format!("cycle {now}: {e}")),
        }
    }

    /// Whether the occupant finishing at `now` will answer watchdog `id`.
    fn response_due(&self, id: &str, now: Cycle) -> bool {
        let (Some(g), Some(timer)) = (self.bus.current(), self.watchdogs.get(id)) else {
            return false;
        };
        if g.end != now {
            return false;
        }
        match &timer.target {
            WatchdogTarget::Heartbeat(m) => g.master == *m && !self.masters[m.0].crashed,
            WatchdogTarget::ChallengeResponse { device, .. } => {
                timer.challenge == Some(g.txn) && !self.muted.contains(device)
            }
        }
    }

    fn complete(&mut self, id: TxnId, now: Cycle) {
        let rec = match self.bus.complete(id, now) {
            Ok(rec) => rec.clone(),
            Err(e) => {
                self.anomalies.push(format!("cycle {now}: {e}"));
                return;
            }
        };
        let m = rec.txn.master;
        self.emit(now, TraceKind::TxnComplete, Some(m), rec.txn.address, format!("txn={}", id.0));
        if self.masters[m.0].crashed {
            return;
        }
        let mut satisfied = self.watchdogs.observe_heartbeat(m, now);
        if let Target::Device(d) = &rec.txn.target {
            if !self.muted.contains(d) {
                satisfied.extend(self.watchdogs.observe_challenge(id, now));
            }
        }
        for wd in satisfied {
            self.emit(now, TraceKind::WatchdogSatisfied, None, None, format!("id={wd}"));
        }
    }

    fn step(&mut self, now: Cycle) {
        for p in 0..self.pairs.len() {
            let spec = &self.cfg.pairs[p];
            let (head, trail) = (spec.head, spec.trail);
            let out = self.pairs[p].pair.step(
                now,
                !self.masters[head.0].crashed,
                !self.masters[trail.0].crashed,
            );
            if spec.bus_stores {
                let size = spec.store_size;
                for (core, store) in [(head, out.head_store), (trail, out.trail_store)] {
                    if let Some(s) = store {
                        let id = self.fresh_id();
                        self.issue(
                            Transaction {
                                id,
                                master: core,
                                op: Op::Write,
                                size_bytes: size,
                                burst: false,
                                issue: now,
                                target: Target::Memory,
                                address: Some(s.address),
                            },
                            now,
                        );
                    }
                }
            }
            if let Some(mismatch) = out.mismatch {
                self.schedule(now, SocEvent::MismatchInterrupt { pair: p, mismatch });
            }
        }
        let out = self.bus.step(now);
        if let Some(g) = out.grant {
            self.schedule(g.end, SocEvent::TxnComplete(g.txn));
            let address = self.bus.record(g.txn).and_then(|r| r.txn.address);
            self.emit(
                now,
                TraceKind::TxnGrant,
                Some(g.master),
                address,
                format!("txn={} end={}", g.txn.0, g.end),
            );
        }
        for w in out.waits {
            match self.monitor.record_wait(w.victim, w.aggressor, w.cycle) {
                Ok(fired) => {
                    for q in fired {
                        self.schedule(now, SocEvent::QuotaInterrupt(q));
                    }
                }
                Err(e) => self.anomalies.push(format!("cycle {now}: {e}")),
            }
            self.waits.push(w);
        }
    }

    // -- injectors ---------------------------------------------------------

    fn emit_injection(&mut self, i: usize, generation: u64, now: Cycle) {
        let inj = &mut self.injectors[i];
        if inj.generation != generation {
            return;
        }
        let emission = match inj.cursor.next(&inj.program, &self.cfg.latency) {
            Ok(Some(e)) => e,
            Ok(None) => return,
            Err(e) => {
                self.anomalies.push(format!("cycle {now}: {e}"));
                return;
            }
        };
        let master = inj.master;
        let next = inj.cursor.peek(&inj.program);
        let descriptor = emission.descriptor;
        let id = self.fresh_id();
        let txn = emission.into_transaction(id, master);
        self.emit(
            now,
            TraceKind::InjectorEmit,
            Some(master),
            None,
            format!("txn={} descriptor={descriptor}", id.0),
        );
        self.issue(txn, now);
        if let Some(at) = next {
            self.schedule(
                at,
                SocEvent::InjectorEmit {
                    injector: i,
                    generation,
                },
            );
        }
    }

    // -- watchdogs ---------------------------------------------------------

    fn arm(&mut self, id: &str, retry: bool, now: Cycle) {
        let spec = self
            .cfg
            .watchdogs
            .iter()
            .find(|w| w.id == id)
            .expect("scheduled from the config");
        if self.watchdogs.get(id).is_some_and(|t| t.state == TimerState::Armed) {
            // The previous arming is answered by a completion later this cycle.
            if retry {
                self.anomalies
                    .push(format!("cycle {now}: watchdog `{id}` still armed, arming skipped"));
            } else {
                self.schedule(
                    now,
                    SocEvent::WatchdogArm {
                        id: id.to_string(),
                        retry: true,
                    },
                );
                return;
            }
        } else {
            let armed = self.watchdogs.arm(id, now).expect("registered and idle");
            self.emit(now, TraceKind::WatchdogArm, None, None, format!("id={id}"));
            self.schedule(
                armed.expiry_at,
                SocEvent::WatchdogExpiry {
                    id: id.to_string(),
                    arming: armed.arming,
                },
            );
            if let Some((device, via)) = armed.challenge {
                let txn_id = self.fresh_id();
                self.watchdogs.bind_challenge(id, txn_id).expect("registered");
                self.issue(
                    Transaction {
                        id: txn_id,
                        master: via,
                        op: Op::Read,
                        size_bytes: CHALLENGE_BYTES,
                        burst: false,
                        issue: now,
                        target: Target::Device(device),
                        address: None,
                    },
                    now,
                );
            }
        }
        if let Some(period) = spec.rearm_period {
            self.schedule(
                now + period,
                SocEvent::WatchdogArm {
                    id: id.to_string(),
                    retry: false,
                },
            );
        }
    }

    fn expire(&mut self, id: &str, arming: usize, now: Cycle) {
        if self.response_due(id, now) {
            return;
        }
        let Some(irq) = self.watchdogs.expire(id, arming, now) else {
            return;
        };
        let target = match &self.watchdogs.get(id).expect("registered").target {
            WatchdogTarget::Heartbeat(m) => WatchedComponent::Master(*m),
            WatchdogTarget::ChallengeResponse { device, .. } => WatchedComponent::Device(device.clone()),
        };
        let subject = match &target {
            WatchedComponent::Master(m) => Some(*m),
            WatchedComponent::Device(_) => None,
        };
        self.raise(
            now,
            Interrupt::Watchdog {
                id: id.to_string(),
                target,
                armed_at: irq.armed_at,
            },
            TraceKind::WatchdogExpiry,
            subject,
            format!("id={id} armed_at={}", irq.armed_at),
        );
    }

    // -- safety manager ----------------------------------------------------

    fn raise_quota(&mut self, q: QuotaInterrupt, now: Cycle) {
        let matrix = self.monitor.matrix();
        let (offender, victim) = match q.mode {
            QuotaMode::Caused => (q.subject, matrix.worst_victim(q.subject).unwrap_or(q.subject)),
            QuotaMode::Suffered => (matrix.worst_aggressor(q.subject).unwrap_or(q.subject), q.subject),
        };
        let detail = format!(
            "subject={} mode={} value={}",
            self.name(q.subject),
            match q.mode {
                QuotaMode::Caused => "caused",
                QuotaMode::Suffered => "suffered",
            },
            q.value
        );
        self.raise(
            now,
            Interrupt::Quota {
                subject: q.subject,
                mode: q.mode,
                value: q.value,
                offender,
                victim,
            },
            TraceKind::QuotaInterrupt,
            Some(q.subject),
            detail,
        );
    }

    fn fault_matches(&self, fault: &FaultSpec, irq: &Interrupt) -> bool {
        match (irq, &fault.target) {
            (Interrupt::Mismatch { pair, .. }, FaultTarget::StoreValue { pair: p, .. }) => pair == p,
            (Interrupt::Mismatch { pair, .. }, FaultTarget::Crash(m)) => {
                let spec = &self.cfg.pairs[*pair];
                spec.head == *m || spec.trail == *m
            }
            (Interrupt::Watchdog { target: WatchedComponent::Master(w), .. }, FaultTarget::Crash(m)) => w == m,
            (Interrupt::Watchdog { id, target: WatchedComponent::Device(d), .. }, target) => match target {
                FaultTarget::DeviceMute(muted) => muted == d,
                FaultTarget::Crash(m) => self.watchdogs.get(id).is_some_and(|t| {
                    matches!(&t.target, WatchdogTarget::ChallengeResponse { via, .. } if via == m)
                }),
                FaultTarget::StoreValue { .. } => false,
            },
            _ => false,
        }
    }

    /// Earliest injected, not yet detected fault this interrupt explains.
    fn attribute(&self, irq: &Interrupt, now: Cycle) -> Option<usize> {
        (0..self.faults.len())
            .filter(|&k| {
                let f = &self.faults[k];
                f.interrupt.is_none() && f.effective && f.applied_at.is_some_and(|t| t <= now)
            })
            .filter(|&k| self.fault_matches(&self.cfg.faults[k], irq))
            .min_by_key(|&k| (self.cfg.faults[k].at, k))
    }

    fn raise(&mut self, now: Cycle, interrupt: Interrupt, kind: TraceKind, subject: Option<MasterId>, detail: String) {
        let delivery = deliver(now, self.cfg.integration.active());
        let action = react(&interrupt, &self.cfg.policy);
        let fault = self.attribute(&interrupt, now);
        let idx = self.interrupts.len();
        if let Some(k) = fault {
            self.faults[k].interrupt = Some(idx);
        }
        self.interrupts.push(RaisedInterrupt {
            interrupt,
            delivery,
            action,
            applied: false,
            fault,
        });
        self.emit(now, kind, subject, None, format!("irq={idx} {detail}"));
        self.schedule(delivery.effect_at, SocEvent::ActionEffect(idx));
    }

    fn action_label(&self, action: &Action) -> String {
        match action {
            Action::Stall { master, duration } => format!("stall {} {duration}", self.name(*master)),
            Action::Drop { master } => format!("drop {}", self.name(*master)),
            Action::Boost { victim } => format!("boost {}", self.name(*victim)),
            Action::SafeState => "safe_state".to_string(),
            Action::ResetMaster { master } => format!("reset {}", self.name(*master)),
            Action::ResetDevice { device } => format!("reset {device}"),
            Action::ResetPair { pair } => format!("reset_pair {}", self.cfg.pairs[*pair].id),
        }
    }

    fn drop_queue(&mut self, m: MasterId, reason: &str, now: Cycle) {
        for id in self.bus.drop_queued(m) {
            let address = self.bus.record(id).and_then(|r| r.txn.address);
            self.emit(
                now,
                TraceKind::TxnDropped,
                Some(m),
                address,
                format!("txn={} reason={reason}", id.0),
            );
        }
    }

    fn reset_pair(&mut self, p: usize, now: Cycle) {
        for m in [self.cfg.pairs[p].head, self.cfg.pairs[p].trail] {
            self.masters[m.0].crashed = false;
        }
        self.pairs[p].pair.reset(now);
        self.pairs[p].resets += 1;
        for k in 0..self.faults.len() {
            let cleared = matches!(self.cfg.faults[k].target, FaultTarget::StoreValue { pair, .. } if pair == p);
            let f = &mut self.faults[k];
            if cleared && f.applied_at.is_some() && f.interrupt.is_none() && f.effective {
                f.effective = false;
                self.anomalies
                    .push(format!("cycle {now}: fault {k} cleared by a reset of its pair"));
            }
        }
    }

    fn apply(&mut self, i: usize, now: Cycle) {
        let action = self.interrupts[i].action.clone();
        self.interrupts[i].applied = true;
        let label = self.action_label(&action);
        let subject = match &action {
            Action::Stall { master, .. } | Action::Drop { master } | Action::ResetMaster { master } => Some(*master),
            Action::Boost { victim } => Some(*victim),
            _ => None,
        };
        self.emit(now, TraceKind::ActionEffect, subject, None, format!("irq={i} action={label}"));
        match action {
            Action::Stall { master, duration } => self.bus.stall(master, now + duration),
            Action::Drop { master } => {
                self.masters[master.0].dropping = true;
                self.drop_queue(master, "dropped", now);
            }
            Action::Boost { victim } => self.bus.boost(victim),
            Action::SafeState => {
                self.halted = Some(now);
                self.kernel.halt();
            }
            Action::ResetMaster { master } => {
                self.masters[master.0].dropping = false;
                self.masters[master.0].crashed = false;
                self.masters[master.0].generation += 1;
                self.drop_queue(master, "reset", now);
                self.schedule_workload(master, now);
                if let Some(j) = self.injectors.iter().position(|s| s.master == master) {
                    let inj = &mut self.injectors[j];
                    inj.generation += 1;
                    inj.program.start = now;
                    inj.cursor = Cursor::new(&inj.program);
                    let generation = inj.generation;
                    if inj.cursor.peek(&inj.program).is_some() {
                        self.schedule(
                            now,
                            SocEvent::InjectorEmit {
                                injector: j,
                                generation,
                            },
                        );
                    }
                }
                if let Some(p) = self.cfg.pairs.iter().position(|s| s.head == master || s.trail == master) {
                    self.reset_pair(p, now);
                }
            }
            Action::ResetDevice { device } => {
                self.muted.remove(&device);
            }
            Action::ResetPair { pair } => self.reset_pair(pair, now),
        }
        if let Interrupt::Quota { subject, mode, .. } = self.interrupts[i].interrupt {
            if self.cfg.quotas.iter().any(|q| q.subject == subject && q.mode == mode && q.rearm) {
                self.monitor.rearm(subject, mode);
            }
        }
    }

    // -- faults ------------------------------------------------------------

    fn inject(&mut self, k: usize, now: Cycle) {
        let spec = &self.cfg.faults[k];
        self.faults[k].applied_at = Some(now);
        let subject = match &spec.target {
            FaultTarget::Crash(m) => Some(*m),
            _ => None,
        };
        let desc = spec.describe(self.cfg);
        self.emit(now, TraceKind::FaultInject, subject, None, format!("fault={k} {desc}"));
        match spec.target.clone() {
            FaultTarget::StoreValue {
                pair,
                replica,
                index,
                ..
            } => {
                let bit = spec.bit(self.cfg.seed, k).expect("store faults have a bit");
                if let Err(e) = self.pairs[pair].pair.corrupt_store(replica, index, bit) {
                    self.faults[k].effective = false;
                    self.anomalies.push(format!("cycle {now}: fault {k}: {e}"));
                }
            }
            FaultTarget::Crash(m) => {
                self.masters[m.0].crashed = true;
                self.drop_queue(m, "crashed", now);
            }
            FaultTarget::DeviceMute(d) => {
                self.muted.insert(d);
            }
        }
    }

    // -- report ------------------------------------------------------------

    fn finish(mut self) -> SimOutcome {
        let cfg = self.cfg;
        let final_cycle = self.halted.unwrap_or(cfg.horizon);

        for k in 0..self.faults.len() {
            let FaultTarget::StoreValue { pair, replica, index, .. } = cfg.faults[k].target else {
                continue;
            };
            let f = &self.faults[k];
            if f.applied_at.is_none() || !f.effective || f.interrupt.is_some() {
                continue;
            }
            let pending = self.pairs[pair]
                .pair
                .pending_flips()
                .iter()
                .any(|&(r, i, _)| r == replica && i == index);
            if pending {
                self.faults[k].effective = false;
                self.anomalies.push(format!(
                    "fault {k}: store {index} of pair `{}` was never produced",
                    cfg.pairs[pair].id
                ));
            }
        }

        let names = cfg.master_names();
        let n = names.len();
        let matrix = self.monitor.matrix();
        let mut interference = InterferenceReport {
            total_wait_cycles: matrix.total(),
            ..Default::default()
        };
        for v in 0..n {
            let row = interference.matrix.entry(names[v].clone()).or_default();
            for a in (0..n).filter(|&a| a != v) {
                row.insert(names[a].clone(), matrix.cell(MasterId(v), MasterId(a)));
            }
            interference
                .caused
                .insert(names[v].clone(), matrix.caused(MasterId(v)).unwrap_or(0));
            interference
                .suffered
                .insert(names[v].clone(), matrix.suffered(MasterId(v)).unwrap_or(0));
        }

        let mut txns = TxnSummary::default();
        for (m, name) in names.iter().enumerate() {
            txns.per_master.insert(
                name.clone(),
                MasterTxnStats {
                    issued: self.masters[m].refused,
                    dropped: self.masters[m].refused,
                    ..Default::default()
                },
            );
        }
        for rec in self.bus.records() {
            let s = txns
                .per_master
                .get_mut(&names[rec.txn.master.0])
                .expect("known master");
            s.issued += 1;
            s.wait_cycles += rec.wait;
            match rec.status {
                TxnStatus::Completed => {
                    s.completed += 1;
                    s.held_cycles += rec.held;
                    let response = rec.complete.expect("completed") - rec.txn.issue;
                    s.max_response = s.max_response.max(response);
                }
                TxnStatus::Dropped => s.dropped += 1,
                TxnStatus::Queued | TxnStatus::Granted => {
                    s.in_flight += 1;
                    s.held_cycles += rec.held;
                }
            }
        }
        for s in txns.per_master.values() {
            txns.issued += s.issued;
            txns.completed += s.completed;
            txns.dropped += s.dropped;
            txns.in_flight += s.in_flight;
        }

        let master_name = |m: Option<MasterId>| m.map(|m| names[m.0].clone());
        let traces = self
            .observers
            .iter()
            .map(|o| {
                let snapshot = o
                    .buffer
                    .snapshot()
                    .into_iter()
                    .map(|e| TraceEntry {
                        at: e.at,
                        kind: e.kind,
                        master: master_name(e.master),
                        address: e.address,
                        detail: e.detail,
                    })
                    .collect();
                let counters = o
                    .buffer
                    .counters()
                    .iter()
                    .map(|(kind, m, count)| CounterEntry {
                        kind,
                        master: master_name(m),
                        count,
                    })
                    .collect();
                (
                    o.name.clone(),
                    TraceReport {
                        capacity: o.buffer.capacity() as u64,
                        pushed: o.buffer.pushed(),
                        snapshot,
                        counters,
                    },
                )
            })
            .collect();

        let pairs = cfg
            .pairs
            .iter()
            .zip(&self.pairs)
            .map(|(spec, st)| {
                (
                    spec.id.clone(),
                    PairReport {
                        head: names[spec.head.0].clone(),
                        trail: names[spec.trail.0].clone(),
                        threshold: spec.params.threshold,
                        stats: st.pair.stats(),
                        mismatch: st.pair.mismatch(),
                        resets: st.resets,
                    },
                )
            })
            .collect();

        let watchdogs = self
            .watchdogs
            .timers()
            .map(|t| {
                let count = |s: TimerState| t.history.iter().filter(|h| h.outcome == s).count() as u64;
                let target = match &t.target {
                    WatchdogTarget::Heartbeat(m) => format!("heartbeat {}", names[m.0]),
                    WatchdogTarget::ChallengeResponse { device, via } => {
                        format!("challenge {device} via {}", names[via.0])
                    }
                };
                (
                    t.id.clone(),
                    WatchdogReport {
                        deadline: t.deadline,
                        target,
                        armings: t.history.len() as u64,
                        satisfied: count(TimerState::Satisfied),
                        expired: count(TimerState::Expired),
                        history: t.history.clone(),
                    },
                )
            })
            .collect();

        let mut ftti = Vec::new();
        for (k, f) in self.faults.iter().enumerate() {
            let spec = &cfg.faults[k];
            if f.applied_at.is_none() {
                self.anomalies
                    .push(format!("fault {k} at cycle {} was not injected before the run ended", spec.at));
                continue;
            }
            let irq = f.interrupt.map(|i| &self.interrupts[i]);
            let record = FttiRecord {
                t_fault: spec.at,
                t_detect: irq.map(|i| i.delivery.handled_at),
                t_mitigated: irq.filter(|i| i.applied).map(|i| i.delivery.effect_at),
            };
            ftti.push(FttiEntry {
                fault: k,
                target: spec.describe(cfg),
                t_fault: record.t_fault,
                t_detect: record.t_detect,
                t_mitigated: record.t_mitigated,
                verdict: f.effective.then(|| ftti_check(&record, cfg.ftti_budget, cfg.horizon)),
            });
        }
        let judged: Vec<Verdict> = ftti.iter().filter_map(|e| e.verdict).collect();
        let verdict = if judged.is_empty() {
            "none"
        } else if judged.iter().all(|v| v.is_pass()) {
            "pass"
        } else {
            "fail"
        };

        let interrupts = self
            .interrupts
            .iter()
            .map(|r| {
                let (kind, subject, detail) = match &r.interrupt {
                    Interrupt::Quota {
                        subject, mode, value, ..
                    } => (
                        "quota",
                        names[subject.0].clone(),
                        format!(
                            "{} {value}",
                            match mode {
                                QuotaMode::Caused => "caused",
                                QuotaMode::Suffered => "suffered",
                            }
                        ),
                    ),
                    Interrupt::Watchdog { id, armed_at, .. } => ("watchdog", id.clone(), format!("armed_at {armed_at}")),
                    Interrupt::Mismatch { pair, index, kind } => (
                        "mismatch",
                        cfg.pairs[*pair].id.clone(),
                        format!(
                            "{} store {index}",
                            match kind {
                                MismatchKind::Value => "value",
                                MismatchKind::Missing => "missing",
                            }
                        ),
                    ),
                };
                InterruptEntry {
                    kind: kind.to_string(),
                    subject,
                    detail,
                    raised_at: r.delivery.raised_at,
                    handled_at: r.delivery.handled_at,
                    effect_at: r.delivery.effect_at,
                    action: self.action_label(&r.action),
                    applied: r.applied,
                    fault: r.fault,
                }
            })
            .collect();

        let mut digest = 0xcbf2_9ce4_8422_2325u64;
        for e in &self.events {
            fnv1a(&mut digest, &e.at.to_le_bytes());
            fnv1a(&mut digest, &e.seq.to_le_bytes());
            fnv1a(&mut digest, &[e.kind as u8]);
        }

        let report = RunReport {
            schema: SCHEMA.to_string(),
            seed: cfg.seed,
            horizon: cfg.horizon,
            final_cycle,
            mode: cfg.integration.mode,
            masters: cfg
                .masters
                .iter()
                .map(|m| MasterEntry {
                    name: m.master.name.clone(),
                    kind: m.master.kind,
                })
                .collect(),
            interference,
            interrupts,
            transactions: txns,
            traces,
            pairs,
            watchdogs,
            ftti,
            campaign: Vec::new(),
            verdicts: Verdicts {
                ftti: verdict.to_string(),
                budget: cfg.ftti_budget,
                safe_state_at: self.halted,
            },
            anomalies: self.anomalies.clone(),
            events_processed: self.events.len() as u64,
            event_log_digest: format!("{digest:016x}"),
        };
        SimOutcome {
            report,
            trail_logs: self.pairs.iter().map(|p| p.pair.trail_log().to_vec()).collect(),
            txns: self.bus.records().to_vec(),
            trace: self.trace,
            events: self.events,
            waits: self.waits,
            interrupts: self.interrupts,
        }
    }
}
