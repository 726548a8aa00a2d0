//! Fault-mechanism engine.
//!
//! Each victim cell carries two thresholds, one per disturbance direction.
//! Aggressor activity adds dose to per-direction accumulators according to
//! the wordline's role for the cell (NWL or PWL) and the access pattern; a
//! cell flips when the accumulator for the direction matching its current
//! state reaches its threshold.

mod engine;
mod params;
mod vulnerability;

pub use engine::{apply_event, retention_tick, Bitflip, DisturbanceEvent, EventKind};
pub(crate) use engine::{apply_interval, apply_repeated, FlipLog};
pub use params::{
    DisturbDirection, Mechanism, MechanismParams, Mode, ThresholdDist, ThresholdSet,
    REFERENCE_TEMPERATURE_C,
};
pub use vulnerability::{
    cell_draw, sample_vulnerabilities, CellVulnerability, RowVulnerability, ThresholdEntry,
};
