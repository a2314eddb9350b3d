//! Fault injection: fault descriptions and fault campaigns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{par_map, Execution};
use crate::hpc::MasterId;
use crate::kernel::Cycle;
use crate::redundancy::Replica;
use crate::safety::Verdict;
use crate::scenario::ScenarioConfig;
use crate::soc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTarget {
    /// Single-bit flip of store `index` as produced by one replica of a pair.
    StoreValue {
        pair: usize,
        replica: Replica,
        index: u64,
        /// Drawn from the fault's RNG when absent.
        bit: Option<u32>,
    },
    /// The master stops issuing and retiring for the rest of the run.
    Crash(MasterId),
    /// The device keeps occupying the bus but never answers.
    DeviceMute(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub at: Cycle,
    pub target: FaultTarget,
    pub seed: Option<u64>,
}

impl FaultSpec {
    /// Bit a store fault flips, resolving a randomized placement.
    pub fn bit(&self, scenario_seed: u64, ordinal: usize) -> Option<u32> {
        match self.target {
            FaultTarget::StoreValue { bit: Some(b), .. } => Some(b),
            FaultTarget::StoreValue { bit: None, .. } => {
                let seed = self
                    .seed
                    .unwrap_or_else(|| crate::derive_seed(scenario_seed, 0xFA17, ordinal as u64));
                Some(ChaCha8Rng::seed_from_u64(seed).random_range(0..64))
            }
            _ => None,
        }
    }

    pub fn describe(&self, config: &ScenarioConfig) -> String {
        match &self.target {
            FaultTarget::StoreValue {
                pair,
                replica,
                index,
                ..
            } => {
                let which = match replica {
                    Replica::Head => "head",
                    Replica::Trail => "trail",
                };
                format!("store_value {}.{which}[{index}] @{}", config.pairs[*pair].id, self.at)
            }
            FaultTarget::Crash(m) => format!("crash {} @{}", config.master(*m).name, self.at),
            FaultTarget::DeviceMute(d) => format!("device_mute {d} @{}", self.at),
        }
    }
}

/// `count` store-value faults spread uniformly over `pair`'s first
/// `max_index` stores and over `[earliest, latest)`.
pub fn random_store_faults(
    pair: usize,
    count: usize,
    max_index: u64,
    earliest: Cycle,
    latest: Cycle,
    seed: u64,
) -> Vec<FaultSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let replica = if rng.random() {
                Replica::Head
            } else {
                Replica::Trail
            };
            FaultSpec {
                at: rng.random_range(earliest..latest.max(earliest + 1)),
                target: FaultTarget::StoreValue {
                    pair,
                    replica,
                    index: rng.random_range(0..max_index.max(1)),
                    bit: Some(rng.random_range(0..64)),
                },
                seed: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignRow {
    /// `control` for the fault-free run, otherwise the fault description.
    pub label: String,
    pub fault: Option<usize>,
    pub detected: bool,
    /// Mismatch and watchdog interrupts raised during the run.
    pub detections: u64,
    pub t_fault: Option<Cycle>,
    pub t_detect: Option<Cycle>,
    pub t_mitigated: Option<Cycle>,
    pub verdict: Option<Verdict>,
    pub final_cycle: Cycle,
}

/// Runs one simulation per fault, each fault replacing the scenario's own
/// fault list, plus a fault-free control. Rows come back in input order with
/// the control first; an empty fault list gives an empty table.
pub fn campaign(config: &ScenarioConfig, faults: &[FaultSpec], exec: Execution) -> Vec<CampaignRow> {
    if faults.is_empty() {
        return Vec::new();
    }
    let jobs: Vec<Option<usize>> = std::iter::once(None).chain((0..faults.len()).map(Some)).collect();
    par_map(exec, &jobs, |job| {
        let mut cfg = config.clone();
        cfg.faults = job.map(|i| vec![faults[i].clone()]).unwrap_or_default();
        let report = soc::run(&cfg);
        let detections = report
            .interrupts
            .iter()
            .filter(|irq| irq.kind != "quota")
            .count() as u64;
        let entry = report.ftti.first();
        CampaignRow {
            label: match job {
                None => "control".to_string(),
                Some(i) => faults[*i].describe(config),
            },
            fault: *job,
            detected: entry.is_some_and(|e| e.t_detect.is_some()),
            detections,
            t_fault: entry.map(|e| e.t_fault),
            t_detect: entry.and_then(|e| e.t_detect),
            t_mitigated: entry.and_then(|e| e.t_mitigated),
            verdict: entry.and_then(|e| e.verdict),
            final_cycle: report.final_cycle,
        }
    })
}
