use super::{resolve_victim, ExperimentConfig, HcOutcome, ProtocolError, Victim};
use crate::disturb::retention_tick;
use crate::engine::{build_hammer_program, execute, ExecOptions};
use crate::model::{CellArray, ChipProfile, DataDirection, LogicalRow, PhysicalRow, Side};
use crate::{Scalar, Time};

/// One bank under test. Threshold samples are cached in the array across
/// runs, so reusing a bench for all measurements of a row is cheap.
pub struct Bench<'p, S: Scalar> {
    profile: &'p ChipProfile<S>,
    array: CellArray<S>,
    strict_timing: bool,
    warnings: Vec<String>,
}

impl<'p, S: Scalar> Bench<'p, S> {
    pub fn new(profile: &'p ChipProfile<S>) -> Self {
        Bench { profile, array: CellArray::for_profile(profile), strict_timing: false, warnings: Vec::new() }
    }

    pub fn strict_timing(mut self, strict: bool) -> Self {
        self.strict_timing = strict;
        self
    }

    pub fn profile(&self) -> &'p ChipProfile<S> {
        self.profile
    }

    pub fn array(&self) -> &CellArray<S> {
        &self.array
    }

    pub fn array_mut(&mut self) -> &mut CellArray<S> {
        &mut self.array
    }

    /// Advisory timing warnings collected so far.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn options(&self) -> ExecOptions {
        ExecOptions { strict_window: self.strict_timing, collect_flips: false }
    }

    /// Initializes the victim to `victim_pattern` and the aggressors to its
    /// complement, hammers each aggressor `count` times and returns the
    /// number of victim cells that no longer hold the pattern.
    pub fn hammer(
        &mut self,
        victim: PhysicalRow,
        aggressors: &[PhysicalRow],
        victim_pattern: u8,
        count: u64,
        open: Time,
        temperature: f64,
    ) -> Result<u32, ProtocolError> {
        self.array.init_row(victim, victim_pattern)?;
        for &a in aggressors {
            self.array.init_row(a, !victim_pattern)?;
        }
        let program = build_hammer_program(aggressors, count, open)?;
        let options = self.options();
        let trace = execute(self.profile, &mut self.array, &program, S::lit(temperature), options)?;
        for w in trace.warnings {
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
        Ok(self.array.count_mismatches(victim, victim_pattern)?)
    }

    /// Double-sided flips in `direction` after `count` activations per
    /// aggressor.
    pub fn double_sided(&mut self, victim: &Victim, direction: DataDirection, count: u64, cfg: &ExperimentConfig) -> Result<u32, ProtocolError> {
        self.hammer(
            victim.physical,
            &[victim.lower, victim.upper],
            direction.victim_pattern(),
            count,
            cfg.hammer_open,
            cfg.hammer_temp(),
        )
    }

    /// Smallest swept activation count that flips at least one cell.
    pub fn run_hc_first(&mut self, row: LogicalRow, direction: DataDirection, cfg: &ExperimentConfig) -> Result<HcOutcome, ProtocolError> {
        let victim = resolve_victim(self.profile, row)?;
        for count in cfg.candidates() {
            if self.double_sided(&victim, direction, count, cfg)? > 0 {
                return Ok(HcOutcome::Found(count));
            }
        }
        Ok(HcOutcome::NotFound)
    }

    /// Flips after hammering each aggressor at the sweep maximum.
    pub fn run_max_bitflips(&mut self, row: LogicalRow, direction: DataDirection, cfg: &ExperimentConfig) -> Result<u32, ProtocolError> {
        let victim = resolve_victim(self.profile, row)?;
        self.double_sided(&victim, direction, cfg.sweep_max, cfg)
    }

    /// Starting at the row's 0→1 HC_First, the first swept count at which
    /// 1→0 flips outnumber 0→1 flips.
    pub fn run_hc_exceeds(&mut self, row: LogicalRow, hc_first_0to1: HcOutcome, cfg: &ExperimentConfig) -> Result<HcOutcome, ProtocolError> {
        let victim = resolve_victim(self.profile, row)?;
        let Some(start) = hc_first_0to1.found() else {
            return Ok(HcOutcome::NotFound);
        };
        let mut count = start;
        while count <= cfg.sweep_max {
            let up = self.double_sided(&victim, DataDirection::ZeroToOne, count, cfg)?;
            let down = self.double_sided(&victim, DataDirection::OneToZero, count, cfg)?;
            if down > up {
                return Ok(HcOutcome::Found(count));
            }
            count += cfg.step;
        }
        Ok(HcOutcome::NotFound)
    }

    /// Single-sided RowPress from the neighbor on `side`.
    pub fn run_rowpress(&mut self, row: LogicalRow, side: Side, direction: DataDirection, cfg: &ExperimentConfig) -> Result<u32, ProtocolError> {
        let victim = resolve_victim(self.profile, row)?;
        self.hammer(
            victim.physical,
            &[victim.aggressor(side)],
            direction.victim_pattern(),
            cfg.rowpress_count,
            cfg.rowpress_open,
            cfg.rowpress_temp(),
        )
    }

    /// Retention failures of one row after the configured wait.
    pub fn run_retention(&mut self, row: PhysicalRow, pattern: u8, cfg: &ExperimentConfig) -> Result<u32, ProtocolError> {
        self.array.init_row(row, pattern)?;
        retention_tick(&mut self.array, self.profile, cfg.retention_wait, S::lit(cfg.retention_temp()));
        Ok(self.array.count_mismatches(row, pattern)?)
    }
}
