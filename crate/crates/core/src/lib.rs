//! Simulated-DRAM read-disturbance characterization.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] – bank organization: chip profiles, row mapping, cell
//!   encodings, physical adjacency and the per-cell state array.
//! * [`engine`] – timed ACT/PRE/RD/WR/REF programs with bank-state and
//!   timing bookkeeping.
//! * [`disturb`] – the fault-mechanism engine: per-cell vulnerability
//!   sampling and disturbance accumulation.
//! * [`protocols`] – RowHammer/RowPress/retention experiments and the
//!   array-layout reverse-engineering procedures.
//! * [`analysis`] – distribution summaries, per-chip tables and the
//!   device-model consistency checker.
//! * [`cli`] – run orchestration, calibration and result persistence.
//!
//! Every type that carries real-valued doses or thresholds is generic over
//! [`Scalar`] (`f32` or `f64`). The aliases below fix the default `f64`
//! instantiation and an `f32` one.

pub mod analysis;
pub mod cli;
pub mod disturb;
pub mod engine;
pub mod model;
pub mod protocols;
pub mod reference;
pub mod rng;
pub mod scalar;
pub mod time;

pub use scalar::Scalar;
pub use time::Time;

pub use model::{
    Adjacency, CellArray, CellEncoding, ChipProfile, DataDirection, LogicalRow, PhysicalRow,
};

pub type Profile64 = model::ChipProfile<f64>;
pub type Profile32 = model::ChipProfile<f32>;
pub type CellArray64 = model::CellArray<f64>;
pub type CellArray32 = model::CellArray<f32>;
pub type Params64 = disturb::MechanismParams<f64>;
pub type Params32 = disturb::MechanismParams<f32>;
pub type Bench64<'p> = protocols::Bench<'p, f64>;
pub type Bench32<'p> = protocols::Bench<'p, f32>;

/// Tool version embedded in every output artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
