//! Logical and physical organization of one simulated DRAM bank.

mod adjacency;
mod cells;
mod encoding;
mod profile;

pub use adjacency::{neighbors, role_of, Adjacency, Neighbor, Side, WordlineRole};
pub use cells::CellArray;
pub(crate) use cells::RowState;
pub use encoding::{CellEncoding, DataDirection, PhysicalDirection};
pub use profile::{ChipProfile, DieDensity, EncodingPolicy, Manufacturer, ProfileSpec, RowMap};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row address as issued on the command bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogicalRow(pub u32);

/// Wordline position inside the bank after in-DRAM row mapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhysicalRow(pub u32);

impl fmt::Display for LogicalRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PhysicalRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("row {row} out of range (bank has {rows} rows)")]
    RowOutOfRange { row: u32, rows: u32 },
    #[error("column {column} out of range (row has {columns} columns)")]
    ColumnOutOfRange { column: u32, columns: u32 },
    #[error("unsupported data pattern {0:#04x}; only 0x00 and 0xFF are used")]
    UnsupportedPattern(u8),
    #[error("row {0} holds no data")]
    RowNotInitialized(PhysicalRow),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}
