//! Safety-island side: interrupt delivery through the integration channel,
//! reaction policies and fault-tolerant-time-interval accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hpc::MasterId;
use crate::interference::QuotaMode;
use crate::kernel::Cycle;
use crate::redundancy::MismatchKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SafetyError {
    #[error("coupled {which} latency ({coupled}) exceeds the loose one ({loose})")]
    LatencyOrdering {
        which: &'static str,
        coupled: Cycle,
        loose: Cycle,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationKind {
    Coupled,
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Latencies {
    /// Cycles between a monitor raising an interrupt and the island handling it.
    pub observe_latency: Cycle,
    /// Cycles between handling and the control action taking effect.
    pub control_latency: Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationMode {
    pub mode: IntegrationKind,
    pub coupled: Latencies,
    pub loose: Latencies,
}

impl Default for IntegrationMode {
    fn default() -> Self {
        Self {
            mode: IntegrationKind::Coupled,
            coupled: Latencies {
                observe_latency: 1,
                control_latency: 1,
            },
            loose: Latencies {
                observe_latency: 20,
                control_latency: 20,
            },
        }
    }
}

impl IntegrationMode {
    pub fn active(&self) -> Latencies {
        match self.mode {
            IntegrationKind::Coupled => self.coupled,
            IntegrationKind::Loose => self.loose,
        }
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        let pairs = [
            ("observe", self.coupled.observe_latency, self.loose.observe_latency),
            ("control", self.coupled.control_latency, self.loose.control_latency),
        ];
        for (which, coupled, loose) in pairs {
            if coupled > loose {
                return Err(SafetyError::LatencyOrdering {
                    which,
                    coupled,
                    loose,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub raised_at: Cycle,
    pub handled_at: Cycle,
    pub effect_at: Cycle,
}

pub fn deliver(raised_at: Cycle, latencies: Latencies) -> Delivery {
    let handled_at = raised_at + latencies.observe_latency;
    Delivery {
        raised_at,
        handled_at,
        effect_at: handled_at + latencies.control_latency,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaReaction {
    StallOffender(Cycle),
    DropOffender,
    BoostVictimPriority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchdogReaction {
    ResetTarget,
    SafeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchReaction {
    SafeState,
    ResetPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionPolicy {
    pub on_quota: QuotaReaction,
    pub on_watchdog: WatchdogReaction,
    pub on_mismatch: MismatchReaction,
}

impl Default for ReactionPolicy {
    fn default() -> Self {
        Self {
            on_quota: QuotaReaction::StallOffender(100),
            on_watchdog: WatchdogReaction::SafeState,
            on_mismatch: MismatchReaction::SafeState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WatchedComponent {
    Master(MasterId),
    Device(String),
}

/// What a monitor reports, already resolved to the parties involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interrupt {
    Quota {
        subject: MasterId,
        mode: QuotaMode,
        value: u64,
        /// Master blamed for the interference (the subject itself in caused mode).
        offender: MasterId,
        /// Master that suffered most (the subject itself in suffered mode).
        victim: MasterId,
    },
    Watchdog {
        id: String,
        target: WatchedComponent,
        armed_at: Cycle,
    },
    Mismatch {
        pair: usize,
        index: u64,
        kind: MismatchKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stall { master: MasterId, duration: Cycle },
    Drop { master: MasterId },
    Boost { victim: MasterId },
    SafeState,
    ResetMaster { master: MasterId },
    ResetDevice { device: String },
    ResetPair { pair: usize },
}

pub fn react(interrupt: &Interrupt, policy: &ReactionPolicy) -> Action {
    match interrupt {
        Interrupt::Quota {
            offender, victim, ..
        } => match policy.on_quota {
            QuotaReaction::StallOffender(duration) => Action::Stall {
                master: *offender,
                duration,
            },
            QuotaReaction::DropOffender => Action::Drop { master: *offender },
            QuotaReaction::BoostVictimPriority => Action::Boost { victim: *victim },
        },
        Interrupt::Watchdog { target, .. } => match policy.on_watchdog {
            WatchdogReaction::SafeState => Action::SafeState,
            WatchdogReaction::ResetTarget => match target {
                WatchedComponent::Master(m) => Action::ResetMaster { master: *m },
                WatchedComponent::Device(d) => Action::ResetDevice { device: d.clone() },
            },
        },
        Interrupt::Mismatch { pair, .. } => match policy.on_mismatch {
            MismatchReaction::SafeState => Action::SafeState,
            MismatchReaction::ResetPair => Action::ResetPair { pair: *pair },
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FttiRecord {
    pub t_fault: Cycle,
    pub t_detect: Option<Cycle>,
    pub t_mitigated: Option<Cycle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { overshoot: Cycle },
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Judges one fault against the budget; an unmitigated fault runs until `horizon`.
pub fn ftti_check(record: &FttiRecord, budget: Cycle, horizon: Cycle) -> Verdict {
    match record.t_mitigated {
        Some(done) => {
            let elapsed = done.saturating_sub(record.t_fault);
            if elapsed <= budget {
                Verdict::Pass
            } else {
                Verdict::Fail {
                    overshoot: elapsed - budget,
                }
            }
        }
        None => Verdict::Fail {
            overshoot: horizon.saturating_sub(record.t_fault),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupled_delivery_adds_small_latencies() {
        let d = deliver(300, IntegrationMode::default().coupled);
        assert_eq!((d.handled_at, d.effect_at), (301, 302));
    }

    #[test]
    fn loose_delivery() {
        let d = deliver(300, IntegrationMode::default().loose);
        assert_eq!((d.handled_at, d.effect_at), (320, 340));
    }

    #[test]
    fn mode_difference_is_the_latency_difference() {
        let m = IntegrationMode::default();
        let c = deliver(77, m.coupled);
        let l = deliver(77, m.loose);
        assert_eq!(l.handled_at - c.handled_at, 19);
        assert_eq!(l.effect_at - c.effect_at, 38);
    }

    #[test]
    fn latency_ordering_is_validated() {
        let mut m = IntegrationMode::default();
        assert!(m.validate().is_ok());
        m.loose.observe_latency = 0;
        assert!(matches!(
            m.validate(),
            Err(SafetyError::LatencyOrdering { which: "observe", .. })
        ));
    }

    #[test]
    fn quota_reactions_target_the_right_master() {
        let irq = Interrupt::Quota {
            subject: MasterId(0),
            mode: QuotaMode::Caused,
            value: 3,
            offender: MasterId(0),
            victim: MasterId(1),
        };
        let mut p = ReactionPolicy::default();
        assert_eq!(
            react(&irq, &p),
            Action::Stall {
                master: MasterId(0),
                duration: 100
            }
        );
        p.on_quota = QuotaReaction::BoostVictimPriority;
        assert_eq!(react(&irq, &p), Action::Boost { victim: MasterId(1) });
        p.on_quota = QuotaReaction::DropOffender;
        assert_eq!(react(&irq, &p), Action::Drop { master: MasterId(0) });
    }

    #[test]
    fn watchdog_and_mismatch_reactions() {
        let p = ReactionPolicy {
            on_quota: QuotaReaction::DropOffender,
            on_watchdog: WatchdogReaction::ResetTarget,
            on_mismatch: MismatchReaction::ResetPair,
        };
        let wd = Interrupt::Watchdog {
            id: "w".into(),
            target: WatchedComponent::Device("devX".into()),
            armed_at: 0,
        };
        assert_eq!(react(&wd, &p), Action::ResetDevice { device: "devX".into() });
        let mm = Interrupt::Mismatch {
            pair: 2,
            index: 0,
            kind: MismatchKind::Value,
        };
        assert_eq!(react(&mm, &p), Action::ResetPair { pair: 2 });
        assert_eq!(react(&mm, &ReactionPolicy::default()), Action::SafeState);
    }

    #[test]
    fn ftti_verdicts() {
        let rec = |m| FttiRecord {
            t_fault: 1000,
            t_detect: Some(1100),
            t_mitigated: m,
        };
        assert_eq!(ftti_check(&rec(Some(1400)), 500, 5000), Verdict::Pass);
        assert_eq!(
            ftti_check(&rec(Some(1600)), 500, 5000),
            Verdict::Fail { overshoot: 100 }
        );
        assert_eq!(ftti_check(&rec(Some(1500)), 500, 5000), Verdict::Pass);
        assert_eq!(
            ftti_check(&rec(None), 500, 5000),
            Verdict::Fail { overshoot: 4000 }
        );
    }

    #[test]
    fn policy_serde_shape() {
        let p: ReactionPolicy = serde_json::from_str(
            r#"{"on_quota":{"stall_offender":50},"on_watchdog":"reset_target","on_mismatch":"safe_state"}"#,
        )
        .unwrap();
        assert_eq!(p.on_quota, QuotaReaction::StallOffender(50));
        assert_eq!(p.on_watchdog, WatchdogReaction::ResetTarget);
    }
}
