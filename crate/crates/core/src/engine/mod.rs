//! Timed DRAM command programs and their execution against a [`CellArray`].
//!
//! [`CellArray`]: crate::model::CellArray

mod command;
mod exec;

pub use command::{
    build_hammer_program, Opcode, Program, ProgramItem, RepeatBlock, TimedCommand, MAX_OPEN_TIME,
    REFRESH_WINDOW, T_RAS, T_RC, T_RFC, T_RP,
};
pub use exec::{execute, BankState, EngineError, ExecOptions, ProgramTrace};
