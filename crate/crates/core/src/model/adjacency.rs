use serde::{Deserialize, Serialize};

use super::{ChipProfile, LogicalRow, ModelError, PhysicalRow};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Physical row index − 1.
    Lower,
    /// Physical row index + 1.
    Upper,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Upper, Side::Lower];

    /// Position in [`Side::BOTH`].
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Side::Upper => 0,
            Side::Lower => 1,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        }
    }
}

/// Relationship of an adjacent wordline to one victim cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WordlineRole {
    /// Shares the victim's active region through the bitline contact.
    Nwl,
    /// Passes over the isolation trench next to the victim.
    Pwl,
}

/// Role of the wordline on `side` of a victim for the cell in `column`.
///
/// Checkerboard: the upper wordline is the NWL of even columns and the PWL
/// of odd columns; the lower wordline is the opposite. Every cell therefore
/// has exactly one NWL and one PWL.
#[inline]
pub fn role_of(side: Side, column: u32) -> WordlineRole {
    let even = column % 2 == 0;
    match (side, even) {
        (Side::Upper, true) | (Side::Lower, false) => WordlineRole::Nwl,
        _ => WordlineRole::Pwl,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Neighbor {
    Row(PhysicalRow),
    /// First or last row of a subarray.
    SubarrayEdge,
    /// The adjacent wordline (or the victim itself) was replaced by a spare.
    Remapped,
}

impl Neighbor {
    pub fn row(self) -> Option<PhysicalRow> {
        match self {
            Neighbor::Row(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub victim: PhysicalRow,
    pub lower: Neighbor,
    pub upper: Neighbor,
}

impl Adjacency {
    pub fn neighbor(&self, side: Side) -> Neighbor {
        match side {
            Side::Lower => self.lower,
            Side::Upper => self.upper,
        }
    }

    pub fn has_both(&self) -> bool {
        self.lower.row().is_some() && self.upper.row().is_some()
    }

    pub fn role(&self, side: Side, column: u32) -> WordlineRole {
        role_of(side, column)
    }
}

/// Physical neighborhood of a logical victim row.
pub fn neighbors<S: Scalar>(profile: &ChipProfile<S>, victim: LogicalRow) -> Result<Adjacency, ModelError> {
    let phys = profile.to_physical(victim)?;
    if profile.is_remapped(phys) {
        return Ok(Adjacency { victim: phys, lower: Neighbor::Remapped, upper: Neighbor::Remapped });
    }
    let sub = profile.subarray_of(phys);
    let classify = |cand: Option<u32>| match cand {
        Some(c) if c < profile.rows() && profile.subarray_of(PhysicalRow(c)) == sub => {
            if profile.is_remapped(PhysicalRow(c)) {
                Neighbor::Remapped
            } else {
                Neighbor::Row(PhysicalRow(c))
            }
        }
        _ => Neighbor::SubarrayEdge,
    };
    Ok(Adjacency {
        victim: phys,
        lower: classify(phys.0.checked_sub(1)),
        upper: classify(phys.0.checked_add(1)),
    })
}
