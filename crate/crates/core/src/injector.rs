//! Programmable traffic injection.
//!
//! A program is an ordered list of descriptors. Emissions follow a nominal,
//! contention-free timeline: the next emission is due `duration + delay_after`
//! cycles after the previous one, whatever the bus actually did.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::hpc::{BusError, LatencyTable, MasterId, Op, Target, Transaction, TxnId};
use crate::kernel::Cycle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InjectorError {
    #[error("descriptor {index} repeats forever but is not the last one")]
    InfiniteNotLast { index: usize },
    #[error("descriptor {index} has a repeat count of zero")]
    ZeroRepeat { index: usize },
    #[error("descriptor {index} would emit forever within a single cycle")]
    ZeroPeriod { index: usize },
    #[error("descriptor {index}: {source}")]
    Latency { index: usize, source: BusError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repeat {
    Count(u64),
    Infinite,
}

impl Serialize for Repeat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Repeat::Count(n) => s.serialize_u64(*n),
            Repeat::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Repeat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RepeatVisitor;

        impl Visitor<'_> for RepeatVisitor {
            type Value = Repeat;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive repeat count or \"inf\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Repeat, E> {
                Ok(Repeat::Count(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Repeat, E> {
                u64::try_from(v)
                    .map(Repeat::Count)
                    .map_err(|_| E::custom("repeat count must be non-negative"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Repeat, E> {
                if v == "inf" {
                    Ok(Repeat::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(RepeatVisitor)
    }
}

fn default_repeat() -> Repeat {
    Repeat::Count(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficDescriptor {
    pub op: Op,
    pub size_bytes: u64,
    #[serde(default)]
    pub burst: bool,
    #[serde(default)]
    pub delay_after: Cycle,
    #[serde(default = "default_repeat")]
    pub repeat: Repeat,
    #[serde(default = "memory_target")]
    pub target: Target,
}

fn memory_target() -> Target {
    Target::Memory
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct InjectionProgram {
    pub sequence: Vec<TrafficDescriptor>,
    pub start: Cycle,
}

impl InjectionProgram {
    pub fn validate(&self, table: &LatencyTable) -> Result<(), InjectorError> {
        let last = self.sequence.len().saturating_sub(1);
        for (index, d) in self.sequence.iter().enumerate() {
            match d.repeat {
                Repeat::Infinite if index != last => {
                    return Err(InjectorError::InfiniteNotLast { index })
                }
                Repeat::Count(0) => return Err(InjectorError::ZeroRepeat { index }),
                _ => {}
            }
            let dur = table
                .lookup(&d.target, d.size_bytes, d.burst)
                .map_err(|source| InjectorError::Latency { index, source })?;
            if dur + d.delay_after == 0 {
                return Err(InjectorError::ZeroPeriod { index });
            }
        }
        Ok(())
    }
}

/// One nominal emission of a program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emission {
    pub at: Cycle,
    pub descriptor: usize,
    pub op: Op,
    pub size_bytes: u64,
    pub burst: bool,
    pub target: Target,
}

impl Emission {
    pub fn into_transaction(self, id: TxnId, master: MasterId) -> Transaction {
        Transaction {
            id,
            master,
            op: self.op,
            size_bytes: self.size_bytes,
            burst: self.burst,
            issue: self.at,
            target: self.target,
            address: None,
        }
    }
}

/// Walks a program's nominal timeline one emission at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cursor {
    descriptor: usize,
    done: u64,
    next_at: Cycle,
}

impl Cursor {
    pub fn new(program: &InjectionProgram) -> Self {
        Self {
            descriptor: 0,
            done: 0,
            next_at: program.start,
        }
    }

    /// Cycle of the next emission, if the program has one left.
    pub fn peek(&self, program: &InjectionProgram) -> Option<Cycle> {
        (self.descriptor < program.sequence.len()).then_some(self.next_at)
    }

    pub fn next(
        &mut self,
        program: &InjectionProgram,
        table: &LatencyTable,
    ) -> Result<Option<Emission>, InjectorError> {
        let index = self.descriptor;
        let Some(d) = program.sequence.get(index) else {
            return Ok(None);
        };
        let dur = table
            .lookup(&d.target, d.size_bytes, d.burst)
            .map_err(|source| InjectorError::Latency { index, source })?;
        let emission = Emission {
            at: self.next_at,
            descriptor: index,
            op: d.op,
            size_bytes: d.size_bytes,
            burst: d.burst,
            target: d.target.clone(),
        };
        self.next_at += dur + d.delay_after;
        self.done += 1;
        if matches!(d.repeat, Repeat::Count(n) if self.done >= n) {
            self.descriptor += 1;
            self.done = 0;
        }
        Ok(Some(emission))
    }
}

/// Nominal emission schedule of `program`, truncated to cycles before `horizon`.
pub fn expand(
    program: &InjectionProgram,
    horizon: Cycle,
    table: &LatencyTable,
) -> Result<Vec<Emission>, InjectorError> {
    program.validate(table)?;
    let mut cursor = Cursor::new(program);
    let mut out = Vec::new();
    while cursor.peek(program).is_some_and(|at| at < horizon) {
        match cursor.next(program, table)? {
            Some(e) => out.push(e),
            None => break,
        }
    }
    Ok(out)
}
