//! Aliveness and challenge-response watchdogs.
//!
//! Each arming ends in exactly one of `Satisfied` or `Expired`. A response at
//! exactly `armed_at + deadline` still satisfies the timer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hpc::{MasterId, TxnId};
use crate::kernel::Cycle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WatchdogError {
    #[error("unknown watchdog `{0}`")]
    Unknown(String),
    #[error("watchdog `{0}` is already armed")]
    AlreadyArmed(String),
    #[error("watchdog `{0}` needs a deadline of at least one cycle")]
    ZeroDeadline(String),
    #[error("watchdog `{0}` is registered twice")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchdogTarget {
    /// Satisfied by any transaction the master completes while armed.
    Heartbeat(MasterId),
    /// Satisfied by the response to a read issued to `device` through `via` when armed.
    ChallengeResponse { device: String, via: MasterId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerState {
    Idle,
    Armed,
    Satisfied,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmingRecord {
    pub armed_at: Cycle,
    pub outcome: TimerState,
    pub resolved_at: Option<Cycle>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatchdogTimer {
    pub id: String,
    pub deadline: Cycle,
    pub target: WatchdogTarget,
    pub state: TimerState,
    pub armed_at: Cycle,
    /// Outstanding challenge read, for challenge-response timers.
    pub challenge: Option<TxnId>,
    pub history: Vec<ArmingRecord>,
}

impl WatchdogTimer {
    pub fn arming(&self) -> usize {
        self.history.len()
    }

    fn resolve(&mut self, state: TimerState, cycle: Cycle) {
        self.state = state;
        if let Some(last) = self.history.last_mut() {
            last.outcome = state;
            last.resolved_at = Some(cycle);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchdogInterrupt {
    pub id: String,
    pub armed_at: Cycle,
    pub cycle: Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Armed {
    /// When the expiry check is due.
    pub expiry_at: Cycle,
    /// Generation number to hand back to [`WatchdogBank::expire`].
    pub arming: usize,
    /// `(device, via)` when a challenge read has to be issued now.
    pub challenge: Option<(String, MasterId)>,
}

#[derive(Debug, Clone, Default)]
pub struct WatchdogBank {
    timers: BTreeMap<String, WatchdogTimer>,
}

impl WatchdogBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        id: &str,
        deadline: Cycle,
        target: WatchdogTarget,
    ) -> Result<(), WatchdogError> {
        if deadline == 0 {
            return Err(WatchdogError::ZeroDeadline(id.to_string()));
        }
        if self.timers.contains_key(id) {
            return Err(WatchdogError::Duplicate(id.to_string()));
        }
        self.timers.insert(
            id.to_string(),
            WatchdogTimer {
                id: id.to_string(),
                deadline,
                target,
                state: TimerState::Idle,
                armed_at: 0,
                challenge: None,
                history: Vec::new(),
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&WatchdogTimer> {
        self.timers.get(id)
    }

    pub fn timers(&self) -> impl Iterator<Item = &WatchdogTimer> {
        self.timers.values()
    }

    fn timer_mut(&mut self, id: &str) -> Result<&mut WatchdogTimer, WatchdogError> {
        self.timers
            .get_mut(id)
            .ok_or_else(|| WatchdogError::Unknown(id.to_string()))
    }

    pub fn arm(&mut self, id: &str, cycle: Cycle) -> Result<Armed, WatchdogError> {
        let t = self.timer_mut(id)?;
        if t.state == TimerState::Armed {
            return Err(WatchdogError::AlreadyArmed(id.to_string()));
        }
        t.state = TimerState::Armed;
        t.armed_at = cycle;
        t.challenge = None;
        t.history.push(ArmingRecord {
            armed_at: cycle,
            outcome: TimerState::Armed,
            resolved_at: None,
        });
        let challenge = match &t.target {
            WatchdogTarget::ChallengeResponse { device, via } => Some((device.clone(), *via)),
            WatchdogTarget::Heartbeat(_) => None,
        };
        Ok(Armed {
            expiry_at: cycle + t.deadline,
            arming: t.arming(),
            challenge,
        })
    }

    /// Binds the challenge read issued for the current arming of `id`.
    pub fn bind_challenge(&mut self, id: &str, txn: TxnId) -> Result<(), WatchdogError> {
        self.timer_mut(id)?.challenge = Some(txn);
        Ok(())
    }

    /// Returns whether the response satisfied the timer; late responses are ignored.
    pub fn observe_response(&mut self, id: &str, cycle: Cycle) -> Result<bool, WatchdogError> {
        let t = self.timer_mut(id)?;
        if t.state == TimerState::Armed && cycle >= t.armed_at && cycle <= t.armed_at + t.deadline {
            t.resolve(TimerState::Satisfied, cycle);
            return Ok(true);
        }
        Ok(false)
    }

    /// Feeds a completed transaction of `master`; returns the timers it satisfied.
    pub fn observe_heartbeat(&mut self, master: MasterId, cycle: Cycle) -> Vec<String> {
        let ids: Vec<String> = self
            .timers
            .values()
            .filter(|t| t.target == WatchdogTarget::Heartbeat(master))
            .map(|t| t.id.clone())
            .collect();
        ids.into_iter()
            .filter(|id| self.observe_response(id, cycle).unwrap_or(false))
            .collect()
    }

    /// Feeds the response to a challenge read; returns the timer it satisfied.
    pub fn observe_challenge(&mut self, txn: TxnId, cycle: Cycle) -> Option<String> {
        let id = self
            .timers
            .values()
            .find(|t| t.challenge == Some(txn))?
            .id
            .clone();
        self.observe_response(&id, cycle).ok()?.then_some(id)
    }

    /// Expiry check for arming number `arming` of `id`.
    pub fn expire(&mut self, id: &str, arming: usize, cycle: Cycle) -> Option<WatchdogInterrupt> {
        let t = self.timers.get_mut(id)?;
        if t.arming() != arming || t.state != TimerState::Armed {
            return None;
        }
        t.resolve(TimerState::Expired, cycle);
        Some(WatchdogInterrupt {
            id: id.to_string(),
            armed_at: t.armed_at,
            cycle,
        })
    }

    /// Returns the timer to idle so it can be armed again.
    pub fn reset(&mut self, id: &str) {
        if let Some(t) = self.timers.get_mut(id) {
            if t.state == TimerState::Armed {
                t.resolve(TimerState::Idle, t.armed_at);
            }
            t.state = TimerState::Idle;
            t.challenge = None;
        }
    }
}
