use std::collections::BTreeMap;

use thiserror::Error;

use super::command::{Opcode, Program, ProgramItem, RepeatBlock, TimedCommand};
use super::{MAX_OPEN_TIME, REFRESH_WINDOW, T_RAS, T_RC, T_RFC, T_RP};
use crate::disturb::{apply_interval, apply_repeated, Bitflip, FlipLog};
use crate::model::{CellArray, ChipProfile, ModelError, PhysicalRow};
use crate::{Scalar, Time};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("illegal command at {at} ns: {reason}")]
    IllegalCommand { at: Time, reason: String },
    #[error("timing violation at {at} ns: {reason}")]
    TimingViolation { at: Time, reason: String },
    #[error("program span {span} ns exceeds the 64 ms refresh window")]
    RefreshWindowExceeded { span: Time },
    #[error("open time {open_time} ns outside [tRAS, 7.8 us]")]
    OpenTimeOutOfBounds { open_time: Time },
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl EngineError {
    pub fn is_timing(&self) -> bool {
        matches!(self, EngineError::TimingViolation { .. } | EngineError::RefreshWindowExceeded { .. })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<PhysicalRow>,
    pub row_open_since: Option<Time>,
    pub total_elapsed: Time,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Treat a span beyond the refresh window as an error instead of a
    /// warning.
    pub strict_window: bool,
    /// Record individual flips in the trace (they are always counted).
    pub collect_flips: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProgramTrace {
    pub activations: BTreeMap<PhysicalRow, u64>,
    pub open_time: BTreeMap<PhysicalRow, Time>,
    pub span: Time,
    pub warnings: Vec<String>,
    pub reads: Vec<(Time, u32, u8)>,
    pub flip_count: u64,
    pub bitflips: Vec<Bitflip>,
    pub bank: BankState,
}

impl ProgramTrace {
    pub fn activations_of(&self, row: PhysicalRow) -> u64 {
        self.activations.get(&row).copied().unwrap_or(0)
    }

    pub fn open_time_of(&self, row: PhysicalRow) -> Time {
        self.open_time.get(&row).copied().unwrap_or(Time::ZERO)
    }

    pub fn total_open_time(&self) -> Time {
        self.open_time.values().copied().sum()
    }
}

/// Bank-state and timing checker. Times are relative to program start.
#[derive(Clone, Debug, Default)]
struct Checker {
    open: Option<(PhysicalRow, Time)>,
    last_act: Option<Time>,
    last_pre: Option<Time>,
    last_ref: Option<Time>,
    last: Option<TimedCommand>,
}

impl Checker {
    fn shift(&mut self, by: Time) {
        for t in [&mut self.last_act, &mut self.last_pre, &mut self.last_ref].into_iter().flatten() {
            *t += by;
        }
        if let Some((_, since)) = &mut self.open {
            *since += by;
        }
        if let Some(c) = &mut self.last {
            c.issue_time += by;
        }
    }

    fn step<S: Scalar>(
        &mut self,
        cmd: TimedCommand,
        profile: &ChipProfile<S>,
        array: &CellArray<S>,
    ) -> Result<Option<(PhysicalRow, Time)>, EngineError> {
        let at = cmd.issue_time;
        let timing = |reason: String| Err(EngineError::TimingViolation { at, reason });
        let illegal = |reason: &str| Err(EngineError::IllegalCommand { at, reason: reason.to_string() });
        if let Some(prev) = self.last {
            if at < prev.issue_time {
                return timing(format!("issue time before previous command at {} ns", prev.issue_time));
            }
        }
        if let Some(r) = self.last_ref {
            if at < r + T_RFC {
                return timing("command within tRFC of REF".into());
            }
        }
        let mut closed = None;
        match cmd.opcode {
            Opcode::Act(row) => {
                if self.open.is_some() {
                    return illegal("ACT while a row is open");
                }
                if row.0 >= profile.rows() {
                    return Err(ModelError::RowOutOfRange { row: row.0, rows: profile.rows() }.into());
                }
                if let Some(a) = self.last_act {
                    if at - a < T_RC {
                        return timing(format!("ACT-to-ACT {} ns below tRC", at - a));
                    }
                }
                if let Some(p) = self.last_pre {
                    if at - p < T_RP {
                        return timing(format!("PRE-to-ACT {} ns below tRP", at - p));
                    }
                }
                self.open = Some((row, at));
                self.last_act = Some(at);
            }
            Opcode::Pre => {
                let Some((row, since)) = self.open.take() else {
                    return illegal("PRE with no open row");
                };
                let open = at - since;
                if open < T_RAS {
                    return timing(format!("row open {open} ns, below tRAS"));
                }
                if open > MAX_OPEN_TIME {
                    return timing(format!("row open {open} ns, above 7.8 us"));
                }
                self.last_pre = Some(at);
                closed = Some((row, open));
            }
            Opcode::Rd(col) | Opcode::Wr(col, _) => {
                let Some((row, _)) = self.open else {
                    return illegal("column access with no open row");
                };
                if col >= profile.columns() / 8 {
                    return Err(ModelError::ColumnOutOfRange { column: col, columns: profile.columns() / 8 }.into());
                }
                if !array.is_materialized(row) {
                    return Err(ModelError::RowNotInitialized(row).into());
                }
            }
            Opcode::Ref => {
                if self.open.is_some() {
                    return illegal("REF while a row is open");
                }
                self.last_ref = Some(at);
            }
        }
        self.last = Some(cmd);
        Ok(closed)
    }

    fn span(&self) -> Time {
        self.last.map(|c| c.issue_time + c.opcode.closing_latency()).unwrap_or(Time::ZERO)
    }
}

struct Summary {
    activations: BTreeMap<PhysicalRow, u64>,
    open_time: BTreeMap<PhysicalRow, Time>,
    span: Time,
}

fn count(summary: &mut Summary, row: PhysicalRow, open: Time, times: u64) {
    *summary.activations.entry(row).or_default() += times;
    *summary.open_time.entry(row).or_default() += open * times;
}

/// Walks the whole program without touching the array. A loop is checked
/// on its first two iterations and its last one; every iteration in
/// between is a time-shifted copy of the second.
fn validate<S: Scalar>(program: &Program, profile: &ChipProfile<S>, array: &CellArray<S>) -> Result<Summary, EngineError> {
    let mut ck = Checker::default();
    let mut summary = Summary { activations: BTreeMap::new(), open_time: BTreeMap::new(), span: Time::ZERO };
    for item in program.items() {
        match item {
            ProgramItem::Command(c) => {
                if let Some((row, open)) = ck.step(*c, profile, array)? {
                    count(&mut summary, row, open, 1);
                }
            }
            ProgramItem::Repeat(block) => {
                if block.body.windows(2).any(|w| w[1].issue_time < w[0].issue_time)
                    || block.body.last().is_some_and(|c| c.issue_time >= block.period)
                {
                    return Err(EngineError::InvalidProgram("loop body not ordered within its period".into()));
                }
                let mut per_iteration = Vec::new();
                for c in block.iteration(0) {
                    if let Some(iv) = ck.step(c, profile, array)? {
                        per_iteration.push(iv);
                    }
                }
                let literal_tail = block.times.min(3);
                for i in 1..literal_tail {
                    let i = if i == 2 {
                        ck.shift(block.period * (block.times - 3));
                        block.times - 1
                    } else {
                        i
                    };
                    for c in block.iteration(i) {
                        ck.step(c, profile, array)?;
                    }
                }
                for (row, open) in per_iteration {
                    count(&mut summary, row, open, block.times);
                }
            }
        }
    }
    if let Some((_, since)) = ck.open {
        return Err(EngineError::IllegalCommand { at: since, reason: "program ends with a row open".into() });
    }
    summary.span = ck.span();
    Ok(summary)
}

struct Runner<'a, S: Scalar> {
    profile: &'a ChipProfile<S>,
    array: &'a mut CellArray<S>,
    temperature: S,
    start: Time,
    open: Option<(PhysicalRow, Time)>,
    log: FlipLog,
    reads: Vec<(Time, u32, u8)>,
}

impl<S: Scalar> Runner<'_, S> {
    fn run(&mut self, c: TimedCommand) -> Result<(), EngineError> {
        let at = self.start + c.issue_time;
        self.array.set_now(at);
        match c.opcode {
            Opcode::Act(row) => {
                self.array.restore(row);
                self.open = Some((row, at));
            }
            Opcode::Pre => {
                let (row, since) = self.open.take().expect("validated");
                apply_interval(self.array, self.profile, row, at - since, self.temperature, &mut self.log);
            }
            Opcode::Rd(col) => {
                let (row, _) = self.open.expect("validated");
                let byte = self.array.read_byte(row, col)?;
                self.reads.push((c.issue_time, col, byte));
            }
            Opcode::Wr(col, data) => {
                let (row, _) = self.open.expect("validated");
                self.array.write_byte(row, col, data)?;
            }
            Opcode::Ref => self.array.restore_all(),
        }
        Ok(())
    }

    fn run_block(&mut self, block: &RepeatBlock) -> Result<(), EngineError> {
        let mut next = 0;
        if block.is_hammer_loop() && block.times >= 3 {
            for i in 0..2 {
                for c in block.iteration(i) {
                    self.run(c)?;
                }
            }
            next = 2;
            let mut intervals = Vec::new();
            let mut since = None;
            for c in &block.body {
                match c.opcode {
                    Opcode::Act(row) => since = Some((row, c.issue_time)),
                    Opcode::Pre => {
                        let (row, t) = since.take().expect("validated");
                        intervals.push((row, c.issue_time - t));
                    }
                    _ => unreachable!(),
                }
            }
            if apply_repeated(self.array, self.profile, &intervals, self.temperature, block.times - 2, &mut self.log) {
                // Aggressors are not victims of the loop, so only their
                // restore times are left to settle.
                for c in block.iteration(block.times - 1) {
                    let at = self.start + c.issue_time;
                    self.array.set_now(at);
                    if let Opcode::Act(row) = c.opcode {
                        self.array.restore(row);
                    }
                }
                return Ok(());
            }
        }
        for i in next..block.times {
            for c in block.iteration(i) {
                self.run(c)?;
            }
        }
        Ok(())
    }
}

/// Executes `program` starting at the array's current time.
///
/// The program is checked in full before any state changes, so an error
/// leaves the array untouched. Each ACT restores its row; each PRE hands
/// the closed interval to the disturbance engine. The array clock ends at
/// program start plus span.
pub fn execute<S: Scalar>(
    profile: &ChipProfile<S>,
    array: &mut CellArray<S>,
    program: &Program,
    temperature: S,
    options: ExecOptions,
) -> Result<ProgramTrace, EngineError> {
    let summary = validate(program, profile, array)?;
    let mut warnings = Vec::new();
    if !program.contains_refresh() && summary.span > REFRESH_WINDOW {
        if options.strict_window {
            return Err(EngineError::RefreshWindowExceeded { span: summary.span });
        }
        warnings.push(format!("program span {} ns exceeds the 64 ms refresh window", summary.span));
    }
    let start = array.now();
    let mut runner = Runner {
        profile,
        array,
        temperature,
        start,
        open: None,
        log: FlipLog { collect: options.collect_flips, ..Default::default() },
        reads: Vec::new(),
    };
    for item in program.items() {
        match item {
            ProgramItem::Command(c) => runner.run(*c)?,
            ProgramItem::Repeat(block) => runner.run_block(block)?,
        }
    }
    let Runner { log, reads, array, .. } = runner;
    array.set_now(start + summary.span);
    Ok(ProgramTrace {
        activations: summary.activations,
        open_time: summary.open_time,
        span: summary.span,
        warnings,
        reads,
        flip_count: log.count,
        bitflips: log.flips,
        bank: BankState { open_row: None, row_open_since: None, total_elapsed: array.now() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturb::{MechanismParams, Mode, ThresholdDist, ThresholdSet};
    use crate::engine::build_hammer_program;
    use crate::model::ProfileSpec;

    fn profile() -> ChipProfile<f64> {
        let params = MechanismParams::template(
            Mode::Empirical,
            ThresholdSet { falling: ThresholdDist::new(7.0, 0.5, 0.3), rising: ThresholdDist::new(7.0, 0.5, 0.3) },
        );
        ChipProfile::new(ProfileSpec::synthetic(1024, 256, 512, params)).unwrap()
    }

    fn run(p: &Program) -> Result<ProgramTrace, EngineError> {
        let prof = profile();
        let mut a = CellArray::for_profile(&prof);
        a.init_row(PhysicalRow(5), 0xFF).unwrap();
        execute(&prof, &mut a, p, 50.0, ExecOptions::default())
    }

    #[test]
    fn double_act_is_illegal() {
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(3))).push(Time::from_ns(100), Opcode::Act(PhysicalRow(3)));
        assert!(matches!(run(&p), Err(EngineError::IllegalCommand { .. })));
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Pre);
        assert!(matches!(run(&p), Err(EngineError::IllegalCommand { .. })));
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(3)));
        assert!(matches!(run(&p), Err(EngineError::IllegalCommand { .. })));
    }

    #[test]
    fn timing_violations() {
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(3)))
            .push(Time::from_ns(32), Opcode::Pre)
            .push(Time::from_ns(46), Opcode::Act(PhysicalRow(3)))
            .push(Time::from_ns(90), Opcode::Pre);
        assert!(matches!(run(&p), Err(EngineError::TimingViolation { .. })));
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(3))).push(Time::from_ns(7801), Opcode::Pre);
        assert!(matches!(run(&p), Err(EngineError::TimingViolation { .. })));
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(3))).push(Time::from_ns(20), Opcode::Pre);
        assert!(matches!(run(&p), Err(EngineError::TimingViolation { .. })));
    }

    #[test]
    fn single_long_open() {
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(4))).push(Time::from_ns(7800), Opcode::Pre);
        let t = run(&p).unwrap();
        assert_eq!(t.open_time_of(PhysicalRow(4)), Time::from_ns(7800));
        assert_eq!(t.activations_of(PhysicalRow(4)), 1);
        assert_eq!(t.span, Time::from_ns(7800) + T_RP);
    }

    #[test]
    fn half_million_pairs_fit_the_window() {
        let p = build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 500_000, T_RAS).unwrap();
        let t = run(&p).unwrap();
        assert!(t.warnings.is_empty());
        let oracle = 2.0 * 500_000.0 * 46.16;
        assert!((t.span.as_ns_f64() - oracle).abs() / oracle < 1e-3);
        assert_eq!(t.activations_of(PhysicalRow(4)), 500_000);
        assert_eq!(t.activations_of(PhysicalRow(6)), 500_000);
    }

    #[test]
    fn window_check_is_advisory_unless_strict() {
        let p = build_hammer_program(&[PhysicalRow(4)], 9000, MAX_OPEN_TIME).unwrap();
        let t = run(&p).unwrap();
        assert_eq!(t.warnings.len(), 1);
        let prof = profile();
        let mut a = CellArray::for_profile(&prof);
        let strict = ExecOptions { strict_window: true, ..Default::default() };
        assert!(matches!(execute(&prof, &mut a, &p, 50.0, strict), Err(EngineError::RefreshWindowExceeded { .. })));
    }

    #[test]
    fn writes_and_reads() {
        let mut p = Program::new();
        p.push(Time::ZERO, Opcode::Act(PhysicalRow(5)))
            .push(Time::from_ns(10), Opcode::Wr(2, 0x0F))
            .push(Time::from_ns(20), Opcode::Rd(2))
            .push(Time::from_ns(40), Opcode::Pre);
        let t = run(&p).unwrap();
        assert_eq!(t.reads, vec![(Time::from_ns(20), 2, 0x0F)]);
    }

    #[test]
    fn refresh_restores_rows() {
        let prof = profile();
        let mut a = CellArray::for_profile(&prof);
        a.init_row(PhysicalRow(5), 0xFF).unwrap();
        let mut p = build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 10, T_RAS).unwrap();
        p.push(Time::from_ns(2000), Opcode::Ref);
        execute(&prof, &mut a, &p, 50.0, ExecOptions::default()).unwrap();
        assert_eq!(a.accumulator(PhysicalRow(5), 0, crate::disturb::DisturbDirection::Falling).unwrap(), 0.0);
        assert_eq!(a.retention_clock(PhysicalRow(5)).unwrap(), T_RFC);
    }

    #[test]
    fn bulk_loop_matches_unrolled() {
        let prof = profile();
        let looped = build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 3000, T_RAS).unwrap();
        let mut unrolled = Program::new();
        for c in looped.commands() {
            unrolled.push(c.issue_time, c.opcode);
        }
        let go = |p: &Program| {
            let mut a = CellArray::for_profile(&prof);
            a.init_row(PhysicalRow(5), 0xFF).unwrap();
            let t = execute(&prof, &mut a, p, 50.0, ExecOptions { collect_flips: true, ..Default::default() }).unwrap();
            let mut flips = t.bitflips.clone();
            flips.sort();
            (t.span, t.activations, flips, a.retention_clock(PhysicalRow(5)).unwrap(), a.now())
        };
        let a = go(&looped);
        assert!(!a.2.is_empty());
        assert_eq!(a, go(&unrolled));
    }

    #[test]
    fn errors_leave_array_untouched() {
        let prof = profile();
        let mut a = CellArray::for_profile(&prof);
        a.init_row(PhysicalRow(5), 0xFF).unwrap();
        let mut p = build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 1000, T_RAS).unwrap();
        p.push(Time::ZERO, Opcode::Pre);
        assert!(execute(&prof, &mut a, &p, 50.0, ExecOptions::default()).is_err());
        assert_eq!(a.now(), Time::ZERO);
        assert_eq!(a.accumulator(PhysicalRow(5), 0, crate::disturb::DisturbDirection::Falling).unwrap(), 0.0);
    }
}
