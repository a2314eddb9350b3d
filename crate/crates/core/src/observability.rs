//! Trace buffers with programmable filters and counter-based logs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::hpc::MasterId;
use crate::kernel::Cycle;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    TxnIssue,
    TxnGrant,
    TxnComplete,
    TxnDropped,
    QuotaInterrupt,
    WatchdogArm,
    WatchdogSatisfied,
    WatchdogExpiry,
    Mismatch,
    FaultInject,
    InjectorEmit,
    ActionEffect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub at: Cycle,
    pub kind: TraceKind,
    pub master: Option<MasterId>,
    pub address: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFilter {
    #[serde(default)]
    pub kinds: BTreeSet<TraceKind>,
    #[serde(default)]
    pub masters: BTreeSet<MasterId>,
    #[serde(default)]
    pub address_range: Option<(u64, u64)>,
}

/// Conjunction over the non-empty dimensions of `filter`.
pub fn matches(filter: &TraceFilter, ev: &TraceEvent) -> bool {
    let kind_ok = filter.kinds.is_empty() || filter.kinds.contains(&ev.kind);
    let master_ok = filter.masters.is_empty() || ev.master.is_some_and(|m| filter.masters.contains(&m));
    let addr_ok = match filter.address_range {
        None => true,
        Some((lo, hi)) => ev.address.is_some_and(|a| (lo..=hi).contains(&a)),
    };
    kind_ok && master_ok && addr_ok
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CounterLog {
    counts: BTreeMap<(TraceKind, Option<MasterId>), u64>,
}

impl CounterLog {
    pub fn bump(&mut self, kind: TraceKind, master: Option<MasterId>) {
        *self.counts.entry((kind, master)).or_default() += 1;
    }

    pub fn get(&self, kind: TraceKind, master: Option<MasterId>) -> u64 {
        self.counts.get(&(kind, master)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TraceKind, Option<MasterId>, u64)> + '_ {
        self.counts.iter().map(|(&(k, m), &c)| (k, m, c))
    }
}

/// FIFO trace buffer keeping the most recent `capacity` events.
#[derive(Debug, Clone)]
pub struct TraceBuffer {
    capacity: usize,
    events: VecDeque<TraceEvent>,
    counters: CounterLog,
    pushed: u64,
}

impl TraceBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            events: VecDeque::with_capacity(capacity.min(DEFAULT_CAPACITY)),
            counters: CounterLog::default(),
            pushed: 0,
        }
    }

    pub fn push(&mut self, ev: TraceEvent) {
        self.counters.bump(ev.kind, ev.master);
        self.pushed += 1;
        self.events.push_back(ev);
        while self.events.len() > self.capacity {
            self.events.pop_front();
        }
    }

    pub fn snapshot(&self) -> Vec<TraceEvent> {
        self.events.iter().cloned().collect()
    }

    pub fn counters(&self) -> &CounterLog {
        &self.counters
    }

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// A filter paired with its own buffer and counters.
#[derive(Debug, Clone)]
pub struct Observer {
    pub name: String,
    pub filter: TraceFilter,
    pub buffer: TraceBuffer,
}

impl Observer {
    pub fn new(name: impl Into<String>, filter: TraceFilter, capacity: usize) -> Self {
        Self {
            name: name.into(),
            filter,
            buffer: TraceBuffer::new(capacity),
        }
    }

    pub fn offer(&mut self, ev: &TraceEvent) {
        if matches(&self.filter, ev) {
            self.buffer.push(ev.clone());
        }
    }
}
