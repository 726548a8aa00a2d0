use serde::{Deserialize, Serialize};

/// How a cell represents a logical 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellEncoding {
    /// Logical 1 is a charged capacitor.
    TrueCell,
    /// Logical 1 is a discharged capacitor.
    AntiCell,
}

impl CellEncoding {
    #[inline]
    pub fn is_charged(self, logical: bool) -> bool {
        match self {
            CellEncoding::TrueCell => logical,
            CellEncoding::AntiCell => !logical,
        }
    }

    #[inline]
    pub fn logical_value(self, charged: bool) -> bool {
        // The mapping is an involution.
        self.is_charged(charged)
    }

    pub fn label(self) -> &'static str {
        match self {
            CellEncoding::TrueCell => "true",
            CellEncoding::AntiCell => "anti",
        }
    }
}

/// Direction of a bitflip in terms of capacitor charge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhysicalDirection {
    ChargedToDischarged,
    DischargedToCharged,
}

/// Direction of a bitflip in terms of stored data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataDirection {
    ZeroToOne,
    OneToZero,
}

impl DataDirection {
    pub const BOTH: [DataDirection; 2] = [DataDirection::ZeroToOne, DataDirection::OneToZero];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            DataDirection::ZeroToOne => 0,
            DataDirection::OneToZero => 1,
        }
    }

    /// Victim initialization that exposes flips in this direction.
    pub fn victim_pattern(self) -> u8 {
        match self {
            DataDirection::ZeroToOne => 0x00,
            DataDirection::OneToZero => 0xFF,
        }
    }

    pub fn of_flip(from: bool) -> Self {
        if from {
            DataDirection::OneToZero
        } else {
            DataDirection::ZeroToOne
        }
    }

    pub fn physical(self, encoding: CellEncoding) -> PhysicalDirection {
        let from_charged = encoding.is_charged(self == DataDirection::OneToZero);
        if from_charged {
            PhysicalDirection::ChargedToDischarged
        } else {
            PhysicalDirection::DischargedToCharged
        }
    }

    /// Logical direction a physical flip shows up as.
    pub fn from_physical(dir: PhysicalDirection, encoding: CellEncoding) -> Self {
        let from_charged = dir == PhysicalDirection::ChargedToDischarged;
        DataDirection::of_flip(encoding.logical_value(from_charged))
    }

    pub fn label(self) -> &'static str {
        match self {
            DataDirection::ZeroToOne => "0to1",
            DataDirection::OneToZero => "1to0",
        }
    }
}
