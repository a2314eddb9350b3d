//! Victim x aggressor interference accounting with programmable quotas.
//!
//! Cells are oriented `cell(victim, aggressor)`. A quota watches either the
//! interference a master causes (column sum over victims) or suffers (row sum
//! over aggressors) and raises one interrupt at the first record that pushes
//! the aggregate strictly above its limit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hpc::MasterId;
use crate::kernel::Cycle;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("master {0} cannot interfere with itself")]
    SelfInterference(MasterId),
    #[error("unknown master {0}")]
    UnknownMaster(MasterId),
    #[error("a quota for {subject} ({mode:?}) already exists")]
    DuplicateQuota { subject: MasterId, mode: QuotaMode },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceMatrix {
    n: usize,
    cells: Vec<u64>,
}

impl InterferenceMatrix {
    pub fn new(masters: usize) -> Self {
        Self {
            n: masters,
            cells: vec![0; masters * masters],
        }
    }

    pub fn masters(&self) -> usize {
        self.n
    }

    fn check(&self, m: MasterId) -> Result<(), MonitorError> {
        if m.0 < self.n {
            Ok(())
        } else {
            Err(MonitorError::UnknownMaster(m))
        }
    }

    pub fn cell(&self, victim: MasterId, aggressor: MasterId) -> u64 {
        self.cells[victim.0 * self.n + aggressor.0]
    }

    fn bump(&mut self, victim: MasterId, aggressor: MasterId) {
        self.cells[victim.0 * self.n + aggressor.0] += 1;
    }

    pub fn caused(&self, aggressor: MasterId) -> Result<u64, MonitorError> {
        self.check(aggressor)?;
        Ok((0..self.n).map(|v| self.cell(MasterId(v), aggressor)).sum())
    }

    pub fn suffered(&self, victim: MasterId) -> Result<u64, MonitorError> {
        self.check(victim)?;
        Ok((0..self.n).map(|a| self.cell(victim, MasterId(a))).sum())
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    /// Rows are victims, columns aggressors.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.cells.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// The aggressor that hurt `victim` most (lowest index on ties).
    pub fn worst_aggressor(&self, victim: MasterId) -> Option<MasterId> {
        (0..self.n)
            .map(MasterId)
            .filter(|&a| self.cell(victim, a) > 0)
            .max_by(|&a, &b| self.cell(victim, a).cmp(&self.cell(victim, b)).then(b.cmp(&a)))
    }

    /// The victim hurt most by `aggressor` (lowest index on ties).
    pub fn worst_victim(&self, aggressor: MasterId) -> Option<MasterId> {
        (0..self.n)
            .map(MasterId)
            .filter(|&v| self.cell(v, aggressor) > 0)
            .max_by(|&a, &b| {
                self.cell(a, aggressor)
                    .cmp(&self.cell(b, aggressor))
                    .then(b.cmp(&a))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotaMode {
    Caused,
    Suffered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub subject: MasterId,
    pub limit: u64,
    pub mode: QuotaMode,
    pub armed: bool,
    /// Aggregate value when the quota was last armed; exceedance is measured from here.
    pub baseline: u64,
}

impl Quota {
    pub fn new(subject: MasterId, limit: u64, mode: QuotaMode) -> Self {
        Self {
            subject,
            limit,
            mode,
            armed: true,
            baseline: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaInterrupt {
    pub subject: MasterId,
    pub mode: QuotaMode,
    pub value: u64,
    pub cycle: Cycle,
}

/// Evaluates one quota against the matrix, disarming it if it fires.
pub fn check_quota(
    matrix: &InterferenceMatrix,
    quota: &mut Quota,
    cycle: Cycle,
) -> Option<QuotaInterrupt> {
    if !quota.armed {
        return None;
    }
    let aggregate = match quota.mode {
        QuotaMode::Caused => matrix.caused(quota.subject),
        QuotaMode::Suffered => matrix.suffered(quota.subject),
    }
    .ok()?;
    let value = aggregate - quota.baseline;
    (value > quota.limit).then(|| {
        quota.armed = false;
        QuotaInterrupt {
            subject: quota.subject,
            mode: quota.mode,
            value,
            cycle,
        }
    })
}

#[derive(Debug, Clone)]
pub struct InterferenceMonitor {
    matrix: InterferenceMatrix,
    quotas: Vec<Quota>,
}

impl InterferenceMonitor {
    pub fn new(masters: usize) -> Self {
        Self {
            matrix: InterferenceMatrix::new(masters),
            quotas: Vec::new(),
        }
    }

    pub fn add_quota(&mut self, quota: Quota) -> Result<(), MonitorError> {
        self.matrix.check(quota.subject)?;
        if self
            .quotas
            .iter()
            .any(|q| q.subject == quota.subject && q.mode == quota.mode)
        {
            return Err(MonitorError::DuplicateQuota {
                subject: quota.subject,
                mode: quota.mode,
            });
        }
        self.quotas.push(quota);
        Ok(())
    }

    pub fn matrix(&self) -> &InterferenceMatrix {
        &self.matrix
    }

    pub fn quotas(&self) -> &[Quota] {
        &self.quotas
    }

    /// Counts one wait cycle and evaluates the quotas it can affect.
    pub fn record_wait(
        &mut self,
        victim: MasterId,
        aggressor: MasterId,
        cycle: Cycle,
    ) -> Result<Vec<QuotaInterrupt>, MonitorError> {
        self.matrix.check(victim)?;
        self.matrix.check(aggressor)?;
        if victim == aggressor {
            return Err(MonitorError::SelfInterference(victim));
        }
        self.matrix.bump(victim, aggressor);
        let matrix = &self.matrix;
        Ok(self
            .quotas
            .iter_mut()
            .filter(|q| match q.mode {
                QuotaMode::Caused => q.subject == aggressor,
                QuotaMode::Suffered => q.subject == victim,
            })
            .filter_map(|q| check_quota(matrix, q, cycle))
            .collect())
    }

    /// Re-arms a quota, measuring future exceedance from the current aggregate.
    pub fn rearm(&mut self, subject: MasterId, mode: QuotaMode) {
        for q in self
            .quotas
            .iter_mut()
            .filter(|q| q.subject == subject && q.mode == mode)
        {
            q.baseline = match mode {
                QuotaMode::Caused => self.matrix.caused(subject),
                QuotaMode::Suffered => self.matrix.suffered(subject),
            }
            .unwrap_or(0);
            q.armed = true;
        }
    }
}
