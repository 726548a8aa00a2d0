use std::fmt;
use std::io::{self, Write};

use super::EngineError;
use crate::model::PhysicalRow;
use crate::Time;

/// ACT to ACT, same bank.
pub const T_RC: Time = Time::from_ps(46_160);
/// Minimum open time.
pub const T_RAS: Time = Time::from_ps(32_000);
/// PRE to ACT.
pub const T_RP: Time = Time::from_ps(14_160);
/// Refresh cycle time, the closing latency of REF.
pub const T_RFC: Time = Time::from_ns(350);
/// Longest an aggressor may stay open in one interval.
pub const MAX_OPEN_TIME: Time = Time::from_ps(7_800_000);
pub const REFRESH_WINDOW: Time = Time::from_ms(64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    Act(PhysicalRow),
    Pre,
    /// Byte column of the open row.
    Rd(u32),
    Wr(u32, u8),
    Ref,
}

impl Opcode {
    /// Time after issue before the bank may accept the next command.
    pub fn closing_latency(self) -> Time {
        match self {
            Opcode::Pre => T_RP,
            Opcode::Ref => T_RFC,
            _ => Time::ZERO,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Opcode::Act(r) => write!(f, "ACT {}", r.0),
            Opcode::Pre => f.write_str("PRE"),
            Opcode::Rd(c) => write!(f, "RD {c}"),
            Opcode::Wr(c, d) => write!(f, "WR {c} 0x{d:02x}"),
            Opcode::Ref => f.write_str("REF"),
        }
    }
}

/// A command with its issue time relative to program start (or, inside a
/// [`RepeatBlock`], to the start of the iteration).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedCommand {
    pub opcode: Opcode,
    pub issue_time: Time,
}

impl TimedCommand {
    pub fn new(issue_time: Time, opcode: Opcode) -> Self {
        TimedCommand { opcode, issue_time }
    }
}

/// `times` back-to-back iterations of `body`, the first starting at
/// `start`, each `period` long.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepeatBlock {
    pub start: Time,
    pub period: Time,
    pub times: u64,
    pub body: Vec<TimedCommand>,
}

impl RepeatBlock {
    pub(crate) fn iteration(&self, i: u64) -> impl Iterator<Item = TimedCommand> + '_ {
        let base = self.start + self.period * i;
        self.body.iter().map(move |c| TimedCommand::new(base + c.issue_time, c.opcode))
    }

    /// Body consists only of ACT/PRE pairs.
    pub(crate) fn is_hammer_loop(&self) -> bool {
        self.body.iter().all(|c| matches!(c.opcode, Opcode::Act(_) | Opcode::Pre))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProgramItem {
    Command(TimedCommand),
    Repeat(RepeatBlock),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    items: Vec<ProgramItem>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, issue_time: Time, opcode: Opcode) -> &mut Self {
        self.items.push(ProgramItem::Command(TimedCommand::new(issue_time, opcode)));
        self
    }

    pub fn push_repeat(&mut self, block: RepeatBlock) -> &mut Self {
        if block.times > 0 && !block.body.is_empty() {
            self.items.push(ProgramItem::Repeat(block));
        }
        self
    }

    pub fn items(&self) -> &[ProgramItem] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of commands after loop expansion.
    pub fn command_count(&self) -> u64 {
        self.items
            .iter()
            .map(|i| match i {
                ProgramItem::Command(_) => 1,
                ProgramItem::Repeat(b) => b.times * b.body.len() as u64,
            })
            .sum()
    }

    pub fn contains_refresh(&self) -> bool {
        self.items.iter().any(|i| match i {
            ProgramItem::Command(c) => c.opcode == Opcode::Ref,
            ProgramItem::Repeat(b) => b.body.iter().any(|c| c.opcode == Opcode::Ref),
        })
    }

    /// Every command in issue order with loops expanded.
    pub fn commands(&self) -> impl Iterator<Item = TimedCommand> + '_ {
        self.items.iter().flat_map(|item| -> Box<dyn Iterator<Item = TimedCommand> + '_> {
            match item {
                ProgramItem::Command(c) => Box::new(std::iter::once(*c)),
                ProgramItem::Repeat(b) => Box::new((0..b.times).flat_map(move |i| b.iteration(i))),
            }
        })
    }

    /// Writes the expanded program, one `<ns> <OPCODE> [row|col]` line per
    /// command.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for c in self.commands() {
            writeln!(out, "{} {}", c.issue_time, c.opcode)?;
        }
        Ok(())
    }
}

/// Hammer program for one or two aggressors, `count` activations each,
/// every activation held open for `open_time`. Two aggressors alternate,
/// starting with the first. Commands are spaced as tightly as tRC and tRP
/// allow.
pub fn build_hammer_program(aggressors: &[PhysicalRow], count: u64, open_time: Time) -> Result<Program, EngineError> {
    if aggressors.is_empty() || aggressors.len() > 2 {
        return Err(EngineError::InvalidProgram(format!(
            "hammer programs take 1 or 2 aggressors, got {}",
            aggressors.len()
        )));
    }
    if open_time < T_RAS || open_time > MAX_OPEN_TIME {
        return Err(EngineError::OpenTimeOutOfBounds { open_time });
    }
    let slot = T_RC.max(open_time + T_RP);
    let mut body = Vec::with_capacity(2 * aggressors.len());
    for (k, &row) in aggressors.iter().enumerate() {
        let at = slot * k as u64;
        body.push(TimedCommand::new(at, Opcode::Act(row)));
        body.push(TimedCommand::new(at + open_time, Opcode::Pre));
    }
    let mut program = Program::new();
    program.push_repeat(RepeatBlock { start: Time::ZERO, period: slot * aggressors.len() as u64, times: count, body });
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acts(p: &Program) -> Vec<u32> {
        p.commands()
            .filter_map(|c| match c.opcode {
                Opcode::Act(r) => Some(r.0),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn double_sided_alternates() {
        let p = build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 3, T_RAS).unwrap();
        assert_eq!(acts(&p), vec![4, 6, 4, 6, 4, 6]);
        assert_eq!(p.command_count(), 12);
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(build_hammer_program(&[PhysicalRow(4), PhysicalRow(6)], 0, T_RAS).unwrap().is_empty());
    }

    #[test]
    fn open_time_bounds() {
        let rows = [PhysicalRow(1)];
        assert!(build_hammer_program(&rows, 1, Time::from_ns(31)).is_err());
        assert!(build_hammer_program(&rows, 1, Time::from_ns(7801)).is_err());
        assert!(build_hammer_program(&rows, 1, MAX_OPEN_TIME).is_ok());
        assert!(build_hammer_program(&[], 1, T_RAS).is_err());
    }

    #[test]
    fn dump_format() {
        let p = build_hammer_program(&[PhysicalRow(9)], 2, T_RAS).unwrap();
        let mut buf = Vec::new();
        p.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0 ACT 9\n32 PRE\n46.16 ACT 9\n78.16 PRE\n");
        let mut q = Program::new();
        q.push(Time::ZERO, Opcode::Wr(3, 0xA5));
        let mut buf = Vec::new();
        q.dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 WR 3 0xa5\n");
    }
}
