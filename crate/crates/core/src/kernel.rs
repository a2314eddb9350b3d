//! Cycle-ordered event queue and the single virtual clock of a run.
//!
//! Events are totally ordered by `(at, seq)`: `seq` is an insertion counter,
//! so events scheduled for the same cycle are processed first-in first-out.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clock cycles since the start of a simulation.
pub type Cycle = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TxnIssue,
    TxnComplete,
    QuotaInterrupt,
    WatchdogArm,
    WatchdogExpiry,
    MismatchInterrupt,
    FaultInject,
    InjectorEmit,
    ActionEffect,
}

/// Anything that can ride the event queue.
pub trait EventPayload {
    fn kind(&self) -> EventKind;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle {
    pub at: Cycle,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub at: Cycle,
    pub seq: u64,
    pub payload: P,
}

impl<P: EventPayload> Event<P> {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at cycle {at} but the clock is already at {now}")]
    PastEvent { at: Cycle, now: Cycle },
    #[error("horizon {horizon} is behind the clock ({now})")]
    HorizonBehind { horizon: Cycle, now: Cycle },
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.at, self.0.seq) == (other.0.at, other.0.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the smallest (at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.at, other.0.seq).cmp(&(self.0.at, self.0.seq))
    }
}

pub struct Kernel<P> {
    now: Cycle,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    halted: Option<Cycle>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            halted: None,
        }
    }

    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, at: Cycle, payload: P) -> Result<EventHandle, KernelError> {
        if at < self.now {
            return Err(KernelError::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event { at, seq, payload }));
        Ok(EventHandle { at, seq })
    }

    /// Cycle of the earliest queued event.
    pub fn peek_at(&self) -> Option<Cycle> {
        self.queue.peek().map(|q| q.0.at)
    }

    /// Pops the next event due at or before `limit`, moving the clock to it.
    pub fn pop_due(&mut self, limit: Cycle) -> Option<Event<P>> {
        if self.halted.is_some() {
            return None;
        }
        match self.queue.peek() {
            Some(q) if q.0.at <= limit => {
                let ev = self.queue.pop().expect("peeked").0;
                self.now = ev.at;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Moves the clock forward without processing anything.
    pub fn advance_to(&mut self, cycle: Cycle) -> Result<(), KernelError> {
        if cycle < self.now {
            return Err(KernelError::HorizonBehind {
                horizon: cycle,
                now: self.now,
            });
        }
        if self.halted.is_none() {
            self.now = cycle;
        }
        Ok(())
    }

    /// Stops the run at the current cycle; later `run_until` calls process nothing.
    pub fn halt(&mut self) {
        self.halted.get_or_insert(self.now);
    }

    pub fn halted_at(&self) -> Option<Cycle> {
        self.halted
    }

    /// Processes every event with `at <= horizon` in `(at, seq)` order.
    ///
    /// Returns `horizon`, or the halting cycle if a handler called [`Kernel::halt`].
    pub fn run_until<F>(&mut self, horizon: Cycle, mut handler: F) -> Result<Cycle, KernelError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if horizon < self.now {
            return Err(KernelError::HorizonBehind {
                horizon,
                now: self.now,
            });
        }
        while let Some(ev) = self.pop_due(horizon) {
            handler(self, ev);
        }
        if let Some(at) = self.halted {
            return Ok(at);
        }
        self.now = horizon;
        Ok(horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(&'static str);

    impl EventPayload for Tag {
        fn kind(&self) -> EventKind {
            EventKind::InjectorEmit
        }
    }

    fn collect(k: &mut Kernel<Tag>, horizon: Cycle) -> (Vec<(Cycle, &'static str)>, Cycle) {
        let mut seen = Vec::new();
        let end = k
            .run_until(horizon, |k, ev| {
                assert_eq!(k.now(), ev.at);
                seen.push((ev.at, ev.payload.0));
            })
            .unwrap();
        (seen, end)
    }

    #[test]
    fn clock_starts_at_zero() {
        let k: Kernel<Tag> = Kernel::new();
        assert_eq!(k.now(), 0);
    }

    #[test]
    fn drained_queue_returns_horizon() {
        let mut k: Kernel<Tag> = Kernel::new();
        let (seen, end) = collect(&mut k, 100);
        assert!(seen.is_empty());
        assert_eq!(end, 100);
        assert_eq!(k.now(), 100);
    }

    #[test]
    fn future_and_same_cycle_events_are_accepted() {
        let mut k = Kernel::new();
        k.advance_to(3).unwrap();
        k.schedule(5, Tag("later")).unwrap();
        k.schedule(3, Tag("first")).unwrap();
        k.schedule(3, Tag("second")).unwrap();
        let (seen, _) = collect(&mut k, 10);
        assert_eq!(seen, vec![(3, "first"), (3, "second"), (5, "later")]);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut k = Kernel::new();
        k.advance_to(3).unwrap();
        assert_eq!(
            k.schedule(2, Tag("late")),
            Err(KernelError::PastEvent { at: 2, now: 3 })
        );
    }

    #[test]
    fn horizon_splits_the_queue() {
        let mut k = Kernel::new();
        k.schedule(4, Tag("a")).unwrap();
        k.schedule(9, Tag("b")).unwrap();
        let (seen, end) = collect(&mut k, 7);
        assert_eq!(seen, vec![(4, "a")]);
        assert_eq!(end, 7);
        assert_eq!(k.pending(), 1);
    }

    #[test]
    fn same_cycle_ties_follow_insertion_order() {
        let mut k = Kernel::new();
        let h0 = k.schedule(4, Tag("seq0")).unwrap();
        let h1 = k.schedule(4, Tag("seq1")).unwrap();
        assert!(h0 < h1);
        let (seen, _) = collect(&mut k, 4);
        assert_eq!(seen, vec![(4, "seq0"), (4, "seq1")]);
    }

    #[test]
    fn handler_may_schedule_at_now() {
        let mut k = Kernel::new();
        k.schedule(2, Tag("outer")).unwrap();
        let mut seen = Vec::new();
        k.run_until(5, |k, ev| {
            if ev.payload.0 == "outer" {
                k.schedule(k.now(), Tag("inner")).unwrap();
            }
            seen.push((ev.at, ev.payload.0));
        })
        .unwrap();
        assert_eq!(seen, vec![(2, "outer"), (2, "inner")]);
    }

    #[test]
    fn halt_stops_processing_and_reports_the_halt_cycle() {
        let mut k = Kernel::new();
        k.schedule(3, Tag("stop")).unwrap();
        k.schedule(6, Tag("never")).unwrap();
        let mut seen = Vec::new();
        let end = k
            .run_until(10, |k, ev| {
                seen.push(ev.payload.0);
                k.halt();
            })
            .unwrap();
        assert_eq!(seen, vec!["stop"]);
        assert_eq!(end, 3);
        assert_eq!(k.now(), 3);
    }

    #[test]
    fn horizon_behind_clock_is_rejected() {
        let mut k: Kernel<Tag> = Kernel::new();
        k.advance_to(8).unwrap();
        assert!(k.run_until(7, |_, _| {}).is_err());
    }
}
