//! Staggered redundant execution over a head/trail pair of cores.
//!
//! The head runs free and retires one instruction per cycle. The trail only
//! retires while it is at least `threshold` instructions behind; with a poll
//! period above one the gate is only consulted every `poll_period` cycles,
//! which is how the software-only flavour of the mechanism loses efficiency.
//! Stores of both replicas are compared in index order.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Cycle;

pub const DEFAULT_WINDOW: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RedundancyError {
    #[error("stagger threshold must be at least 1")]
    ZeroThreshold,
    #[error("poll period must be at least 1")]
    ZeroPollPeriod,
    #[error("instruction stream is empty")]
    EmptyStream,
    #[error("store {index} of the {replica:?} replica has already been compared")]
    StoreAlreadyCompared { replica: Replica, index: u64 },
    #[error("stream has no stores to corrupt")]
    NoStores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replica {
    Head,
    Trail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreOp {
    pub address: u64,
    pub value: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub pc: u64,
    pub opcode: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<StoreOp>,
}

/// A program both replicas execute; it loops back to the start when exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionStream {
    pub body: Vec<Instruction>,
}

impl InstructionStream {
    pub fn new(body: Vec<Instruction>) -> Result<Self, RedundancyError> {
        if body.is_empty() {
            return Err(RedundancyError::EmptyStream);
        }
        Ok(Self { body })
    }

    /// Seeded random loop body with roughly `store_rate_percent`% stores.
    pub fn synthetic(length: usize, store_rate_percent: u8, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = 0x1000u64;
        let mut pc = base;
        let body = (0..length.max(1))
            .map(|_| {
                let ins = Instruction {
                    pc,
                    opcode: rng.random(),
                    store: (rng.random_range(0..100u8) < store_rate_percent).then(|| StoreOp {
                        address: 0x8000_0000 + 8 * rng.random_range(0..4096u64),
                        value: rng.random(),
                    }),
                };
                pc = if rng.random_range(0..10) == 0 {
                    base + 4 * rng.random_range(0..length.max(1) as u64)
                } else {
                    pc + 4
                };
                ins
            })
            .collect();
        Self { body }
    }

    pub fn at(&self, retired: u64) -> &Instruction {
        &self.body[(retired % self.body.len() as u64) as usize]
    }

    pub fn has_stores(&self) -> bool {
        self.body.iter().any(|i| i.store.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub index: u64,
    pub address: u64,
    pub value: u64,
    pub cycle: Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreStream {
    pub retired: u64,
    pub window: VecDeque<(u64, u32)>,
    /// Stores produced but not yet compared, oldest first.
    pub stores: VecDeque<StoreRecord>,
    pub store_count: u64,
}

impl CoreStream {
    fn retire(&mut self, ins: &Instruction, window: usize, cycle: Cycle) -> Option<StoreRecord> {
        self.retired += 1;
        self.window.push_back((ins.pc, ins.opcode));
        while self.window.len() > window {
            self.window.pop_front();
        }
        ins.store.map(|s| {
            let rec = StoreRecord {
                index: self.store_count,
                address: s.address,
                value: s.value,
                cycle,
            };
            self.store_count += 1;
            self.stores.push_back(rec);
            rec
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Advance,
    Stall,
}

/// Trail-core gate given both retirement counters (head already updated this cycle).
pub fn stagger_gate(head_retired: u64, trail_retired: u64, threshold: u64) -> Gate {
    if head_retired.saturating_sub(trail_retired) >= threshold {
        Gate::Advance
    } else {
        Gate::Stall
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiversitySignature(pub u64);

/// FNV-1a over the `(pc, opcode)` window.
pub fn signature<'a, I>(window: I) -> DiversitySignature
where
    I: IntoIterator<Item = &'a (u64, u32)>,
{
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for (pc, op) in window {
        for b in pc.to_le_bytes().into_iter().chain(op.to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        h ^= 0xff;
        h = h.wrapping_mul(PRIME);
    }
    DiversitySignature(h)
}

/// Index of the first store whose address or value differs.
pub fn compare_stores(head: &[StoreRecord], trail: &[StoreRecord]) -> Option<usize> {
    head.iter()
        .zip(trail)
        .position(|(h, t)| (h.address, h.value) != (t.address, t.value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    /// Both replicas produced the store but disagree.
    Value,
    /// One replica never produced the store within the grace period.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub index: u64,
    pub kind: MismatchKind,
    pub cycle: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailRetirement {
    pub cycle: Cycle,
    /// Head-minus-trail gap the gate saw before the trail retired.
    pub gap: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairParams {
    pub threshold: u64,
    pub poll_period: u64,
    pub window: usize,
    pub grace: Cycle,
    pub comparator_enabled: bool,
}

impl PairParams {
    pub fn new(threshold: u64) -> Self {
        Self {
            threshold,
            poll_period: 1,
            window: DEFAULT_WINDOW,
            grace: default_grace(threshold, 1),
            comparator_enabled: true,
        }
    }
}

/// Longest fault-free delay between the two copies of a store, plus slack.
pub fn default_grace(threshold: u64, poll_period: u64) -> Cycle {
    threshold + 2 * poll_period
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStep {
    pub head_store: Option<StoreRecord>,
    pub trail_store: Option<StoreRecord>,
    pub trail_gate: Option<Gate>,
    pub diverse: Option<bool>,
    pub mismatch: Option<Mismatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub head_retired: u64,
    pub trail_retired: u64,
    pub trail_stall_cycles: u64,
    pub undiverse_cycles: u64,
    pub compared_stores: u64,
    pub min_gap: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RedundantPair {
    pub params: PairParams,
    stream: InstructionStream,
    pub head: CoreStream,
    pub trail: CoreStream,
    epoch_start: Cycle,
    budget: u64,
    flips: Vec<(Replica, u64, u32)>,
    mismatch: Option<Mismatch>,
    compared: u64,
    trail_stalls: u64,
    undiverse: u64,
    log: Vec<TrailRetirement>,
}

impl RedundantPair {
    pub fn new(
        params: PairParams,
        stream: InstructionStream,
        start: Cycle,
    ) -> Result<Self, RedundancyError> {
        if params.threshold == 0 {
            return Err(RedundancyError::ZeroThreshold);
        }
        if params.poll_period == 0 {
            return Err(RedundancyError::ZeroPollPeriod);
        }
        if stream.body.is_empty() {
            return Err(RedundancyError::EmptyStream);
        }
        Ok(Self {
            params,
            stream,
            head: CoreStream::default(),
            trail: CoreStream::default(),
            epoch_start: start,
            budget: 0,
            flips: Vec::new(),
            mismatch: None,
            compared: 0,
            trail_stalls: 0,
            undiverse: 0,
            log: Vec::new(),
        })
    }

    pub fn stream(&self) -> &InstructionStream {
        &self.stream
    }

    pub fn gate(&self) -> Gate {
        stagger_gate(self.head.retired, self.trail.retired, self.params.threshold)
    }

    pub fn mismatch(&self) -> Option<Mismatch> {
        self.mismatch
    }

    pub fn trail_log(&self) -> &[TrailRetirement] {
        &self.log
    }

    pub fn stats(&self) -> PairStats {
        PairStats {
            head_retired: self.head.retired,
            trail_retired: self.trail.retired,
            trail_stall_cycles: self.trail_stalls,
            undiverse_cycles: self.undiverse,
            compared_stores: self.compared,
            min_gap: self.log.iter().map(|r| r.gap).min(),
        }
    }

    /// Schedules a single-bit flip of store `index` in `replica`.
    pub fn corrupt_store(&mut self, replica: Replica, index: u64, bit: u32) -> Result<(), RedundancyError> {
        if !self.stream.has_stores() {
            return Err(RedundancyError::NoStores);
        }
        let core = match replica {
            Replica::Head => &mut self.head,
            Replica::Trail => &mut self.trail,
        };
        if index < core.store_count {
            // Produced already: only an uncompared copy can still be corrupted.
            return match core.stores.iter_mut().find(|s| s.index == index) {
                Some(s) => {
                    s.value ^= 1u64 << (bit % 64);
                    Ok(())
                }
                None => Err(RedundancyError::StoreAlreadyCompared { replica, index }),
            };
        }
        self.flips.push((replica, index, bit % 64));
        Ok(())
    }

    /// Flips scheduled for stores the replica has not produced yet.
    pub fn pending_flips(&self) -> &[(Replica, u64, u32)] {
        &self.flips
    }

    /// Restarts both replicas from the first instruction.
    pub fn reset(&mut self, now: Cycle) {
        self.head = CoreStream::default();
        self.trail = CoreStream::default();
        self.epoch_start = now;
        self.budget = 0;
        self.flips.clear();
        self.mismatch = None;
    }

    fn retire(&mut self, replica: Replica, cycle: Cycle) -> Option<StoreRecord> {
        let window = self.params.window;
        let core = match replica {
            Replica::Head => &mut self.head,
            Replica::Trail => &mut self.trail,
        };
        let ins = *self.stream.at(core.retired);
        let mut rec = core.retire(&ins, window, cycle)?;
        if let Some(pos) = self
            .flips
            .iter()
            .position(|&(r, idx, _)| r == replica && idx == rec.index)
        {
            let (_, _, bit) = self.flips.remove(pos);
            rec.value ^= 1u64 << bit;
            core.stores.back_mut().expect("just pushed").value = rec.value;
        }
        Some(rec)
    }

    /// Advances the pair by one cycle; crashed replicas do not retire.
    pub fn step(&mut self, cycle: Cycle, head_alive: bool, trail_alive: bool) -> PairStep {
        let mut out = PairStep::default();
        if head_alive {
            out.head_store = self.retire(Replica::Head, cycle);
        }
        let poll = self.params.poll_period;
        if (cycle - self.epoch_start).is_multiple_of(poll) {
            let gap = self.head.retired - self.trail.retired;
            self.budget = match stagger_gate(self.head.retired, self.trail.retired, self.params.threshold) {
                Gate::Advance => poll.min(gap - self.params.threshold + 1),
                Gate::Stall => 0,
            };
        }
        let gate = if self.budget > 0 { Gate::Advance } else { Gate::Stall };
        out.trail_gate = Some(gate);
        if gate == Gate::Advance && trail_alive {
            self.budget -= 1;
            self.log.push(TrailRetirement {
                cycle,
                gap: self.head.retired - self.trail.retired,
            });
            out.trail_store = self.retire(Replica::Trail, cycle);
        } else {
            self.trail_stalls += 1;
        }
        if !self.trail.window.is_empty() {
            let diverse = signature(&self.head.window) != signature(&self.trail.window);
            if !diverse {
                self.undiverse += 1;
            }
            out.diverse = Some(diverse);
        }
        if self.params.comparator_enabled && self.mismatch.is_none() {
            out.mismatch = self.compare(cycle);
            self.mismatch = out.mismatch;
        }
        out
    }

    fn compare(&mut self, cycle: Cycle) -> Option<Mismatch> {
        while let (Some(h), Some(t)) = (self.head.stores.front(), self.trail.stores.front()) {
            let index = h.index;
            let differs = (h.address, h.value) != (t.address, t.value);
            self.head.stores.pop_front();
            self.trail.stores.pop_front();
            self.compared += 1;
            if differs {
                return Some(Mismatch {
                    index,
                    kind: MismatchKind::Value,
                    cycle,
                });
            }
        }
        let grace = self.params.grace;
        let overdue = |s: &VecDeque<StoreRecord>| s.front().filter(|r| cycle - r.cycle > grace).map(|r| r.index);
        overdue(&self.head.stores)
            .or_else(|| overdue(&self.trail.stores))
            .map(|index| Mismatch {
                index,
                kind: MismatchKind::Missing,
                cycle,
            })
    }
}
