//! Experiment procedures: RowHammer HC_First and maximum-bitflip sweeps,
//! the 1→0-exceeds-0→1 search, single-sided RowPress, retention, and the
//! two array-layout reverse-engineering procedures.

mod bench;
mod results;
mod reveng;
mod runner;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, MAX_OPEN_TIME, T_RAS};
use crate::model::{neighbors, ChipProfile, LogicalRow, ModelError, Neighbor, PhysicalRow, Side};
use crate::{Scalar, Time};

pub use bench::Bench;
pub use results::{merge_results, read_results, write_results, ResultsError, RESULT_HEADER};
pub use reveng::{
    classify_row_retention, reveng_row_mapping, reveng_true_anti, CellLayoutReport, RetentionRow,
    RowMappingReport, SubarrayEncoding,
};
pub use runner::{run_experiment, run_experiments, run_retention_rows, select_rows, with_threads, Experiment, RowResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub rows_to_test: u32,
    pub bank: u32,
    /// Overrides every per-experiment temperature below.
    pub temperature: Option<f64>,
    pub hammer_temperature: f64,
    pub sweep_min: u64,
    pub sweep_max: u64,
    pub step: u64,
    pub hammer_open: Time,
    pub rowpress_open: Time,
    pub rowpress_count: u64,
    pub rowpress_temperature: f64,
    pub retention_wait: Time,
    pub retention_temperature: f64,
    pub reveng_count: u64,
    pub reveng_rows_per_subarray: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rows_to_test: 2048,
            bank: 1,
            temperature: None,
            hammer_temperature: 50.0,
            sweep_min: 0,
            sweep_max: 500_000,
            step: 1000,
            hammer_open: T_RAS,
            rowpress_open: MAX_OPEN_TIME,
            rowpress_count: 7500,
            rowpress_temperature: 80.0,
            retention_wait: Time::from_ms(2000),
            retention_temperature: 80.0,
            reveng_count: 500_000,
            reveng_rows_per_subarray: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::InvalidConfig(m.to_string()));
        if self.step == 0 {
            return bad("step must be positive");
        }
        if self.sweep_max < self.sweep_min {
            return bad("sweep upper bound below lower bound");
        }
        if self.rows_to_test == 0 {
            return bad("rows_to_test must be positive");
        }
        if self.reveng_rows_per_subarray == 0 {
            return bad("reveng_rows_per_subarray must be positive");
        }
        if self.retention_wait == Time::ZERO {
            return bad("retention_wait must be positive");
        }
        Ok(())
    }

    pub fn hammer_temp(&self) -> f64 {
        self.temperature.unwrap_or(self.hammer_temperature)
    }

    pub fn rowpress_temp(&self) -> f64 {
        self.temperature.unwrap_or(self.rowpress_temperature)
    }

    pub fn retention_temp(&self) -> f64 {
        self.temperature.unwrap_or(self.retention_temperature)
    }

    /// Swept activation counts, lower bound first.
    pub fn candidates(&self) -> impl Iterator<Item = u64> {
        (self.sweep_min..=self.sweep_max).step_by(self.step as usize)
    }
}

/// Result of a threshold search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HcOutcome {
    Found(u64),
    NotFound,
}

impl HcOutcome {
    pub fn found(self) -> Option<u64> {
        match self {
            HcOutcome::Found(n) => Some(n),
            HcOutcome::NotFound => None,
        }
    }
}

impl fmt::Display for HcOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HcOutcome::Found(n) => write!(f, "{n}"),
            HcOutcome::NotFound => f.write_str("NF"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    SubarrayBoundary,
    RemappedNeighbor,
    Remapped,
}

impl SkipReason {
    pub fn label(self) -> &'static str {
        match self {
            SkipReason::SubarrayBoundary => "subarray_boundary",
            SkipReason::RemappedNeighbor => "remapped_neighbor",
            SkipReason::Remapped => "remapped",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [SkipReason::SubarrayBoundary, SkipReason::RemappedNeighbor, SkipReason::Remapped]
            .into_iter()
            .find(|r| r.label() == s)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("row skipped: {}", .0.label())]
    Skipped(SkipReason),
    #[error("no neighbor of row {0} showed bitflips")]
    UndetectableNeighbor(LogicalRow),
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ProtocolError {
    pub fn is_timing(&self) -> bool {
        matches!(self, ProtocolError::Engine(e) if e.is_timing())
    }
}

/// A measurable victim row and its two physical neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Victim {
    pub logical: LogicalRow,
    pub physical: PhysicalRow,
    pub lower: PhysicalRow,
    pub upper: PhysicalRow,
}

impl Victim {
    pub fn aggressor(&self, side: Side) -> PhysicalRow {
        match side {
            Side::Lower => self.lower,
            Side::Upper => self.upper,
        }
    }
}

/// Resolves a logical row to a victim, or the reason it must be skipped:
/// it is remapped, a neighbor is remapped, or it sits at a subarray edge.
pub fn resolve_victim<S: Scalar>(profile: &ChipProfile<S>, row: LogicalRow) -> Result<Victim, ProtocolError> {
    let adj = neighbors(profile, row)?;
    if profile.is_remapped(adj.victim) {
        return Err(ProtocolError::Skipped(SkipReason::Remapped));
    }
    let reason = |n: Neighbor| match n {
        Neighbor::Row(_) => None,
        Neighbor::Remapped => Some(SkipReason::RemappedNeighbor),
        Neighbor::SubarrayEdge => Some(SkipReason::SubarrayBoundary),
    };
    let mut reasons = [reason(adj.lower), reason(adj.upper)];
    reasons.sort_by_key(|r| r.map(|r| r != SkipReason::RemappedNeighbor));
    if let Some(r) = reasons.into_iter().flatten().next() {
        return Err(ProtocolError::Skipped(r));
    }
    Ok(Victim {
        logical: row,
        physical: adj.victim,
        lower: adj.lower.row().expect("checked"),
        upper: adj.upper.row().expect("checked"),
    })
}
