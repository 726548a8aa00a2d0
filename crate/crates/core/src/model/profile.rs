use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::{CellEncoding, LogicalRow, ModelError, PhysicalRow};
use crate::cli::CalibrationRecord;
use crate::disturb::{MechanismParams, Mode};
use crate::rng::CounterRng;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manufacturer {
    S,
    H,
    M,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DieDensity {
    #[serde(rename = "8Gb")]
    Gb8,
    #[serde(rename = "16Gb")]
    Gb16,
}

impl fmt::Display for Manufacturer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Manufacturer::S => "S",
            Manufacturer::H => "H",
            Manufacturer::M => "M",
        };
        f.write_str(s)
    }
}

impl fmt::Display for DieDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DieDensity::Gb8 => "8Gb",
            DieDensity::Gb16 => "16Gb",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingPolicy {
    AllTrue,
    AllAnti,
    /// Polarity alternates per subarray; `even_subarrays` gives subarray 0's.
    InterleavedBySubarray { even_subarrays: CellEncoding },
    /// Independent coin flip per subarray.
    RandomPerSubarray { seed: u64 },
}

impl EncodingPolicy {
    pub fn encoding_of_subarray(self, subarray: u32) -> CellEncoding {
        match self {
            EncodingPolicy::AllTrue => CellEncoding::TrueCell,
            EncodingPolicy::AllAnti => CellEncoding::AntiCell,
            EncodingPolicy::InterleavedBySubarray { even_subarrays } => {
                if subarray % 2 == 0 {
                    even_subarrays
                } else {
                    match even_subarrays {
                        CellEncoding::TrueCell => CellEncoding::AntiCell,
                        CellEncoding::AntiCell => CellEncoding::TrueCell,
                    }
                }
            }
            EncodingPolicy::RandomPerSubarray { seed } => {
                if CounterRng::keyed(&[seed, 0xE4C0_D1E5, subarray as u64]).next_u64() & 1 == 0 {
                    CellEncoding::TrueCell
                } else {
                    CellEncoding::AntiCell
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowMap {
    Identity,
    /// `permutation[logical] = physical`.
    Explicit { permutation: Vec<u32> },
    /// Independent random permutation inside each aligned block of `block`
    /// rows; `block == rows_per_bank` shuffles the whole bank.
    BlockShuffle { seed: u64, block: u32 },
}

/// The chip-profile document as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec<S> {
    pub manufacturer: Manufacturer,
    pub die_density: DieDensity,
    pub die_revision: String,
    pub rows_per_bank: u32,
    pub columns_per_row: u32,
    pub subarray_size: u32,
    pub cell_encoding_policy: EncodingPolicy,
    pub logical_to_physical_map: RowMap,
    #[serde(default)]
    pub remapped_rows: BTreeSet<u32>,
    pub mechanism_params: MechanismParams<S>,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
}

/// A validated chip profile with its row map resolved.
///
/// Immutable after construction and cheap to share across threads by
/// reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec<S>", into = "ProfileSpec<S>", bound = "")]
pub struct ChipProfile<S: Scalar = f64> {
    spec: ProfileSpec<S>,
    /// `None` for the identity map.
    forward: Option<Vec<u32>>,
    inverse: Option<Vec<u32>>,
}

impl<S: Scalar> TryFrom<ProfileSpec<S>> for ChipProfile<S> {
    type Error = ModelError;

    fn try_from(spec: ProfileSpec<S>) -> Result<Self, ModelError> {
        ChipProfile::new(spec)
    }
}

impl<S: Scalar> From<ChipProfile<S>> for ProfileSpec<S> {
    fn from(p: ChipProfile<S>) -> Self {
        p.spec
    }
}

impl<S: Scalar> ProfileSpec<S> {
    /// A small all-true-cell profile with identity mapping, for experiments
    /// on made-up geometries.
    pub fn synthetic(
        rows_per_bank: u32,
        columns_per_row: u32,
        subarray_size: u32,
        mechanism_params: MechanismParams<S>,
    ) -> Self {
        ProfileSpec {
            manufacturer: Manufacturer::S,
            die_density: DieDensity::Gb8,
            die_revision: "SYN".into(),
            rows_per_bank,
            columns_per_row,
            subarray_size,
            cell_encoding_policy: EncodingPolicy::AllTrue,
            logical_to_physical_map: RowMap::Identity,
            remapped_rows: BTreeSet::new(),
            mechanism_params,
            master_seed: 1,
            calibration: None,
        }
    }
}

impl<S: Scalar> ChipProfile<S> {
    pub fn new(spec: ProfileSpec<S>) -> Result<Self, ModelError> {
        let invalid = |m: String| Err(ModelError::InvalidProfile(m));
        let rows = spec.rows_per_bank;
        if rows == 0 {
            return invalid("rows_per_bank must be positive".into());
        }
        if spec.subarray_size == 0 || rows % spec.subarray_size != 0 {
            return invalid(format!(
                "subarray_size {} does not divide rows_per_bank {rows}",
                spec.subarray_size
            ));
        }
        if spec.columns_per_row < 8 || spec.columns_per_row % 8 != 0 {
            return invalid(format!(
                "columns_per_row {} must be a positive multiple of 8",
                spec.columns_per_row
            ));
        }
        if let Some(&r) = spec.remapped_rows.iter().find(|&&r| r >= rows) {
            return invalid(format!("remapped row {r} out of range"));
        }
        spec.mechanism_params
            .validate()
            .map_err(ModelError::InvalidProfile)?;

        let forward = match &spec.logical_to_physical_map {
            RowMap::Identity => None,
            RowMap::Explicit { permutation } => {
                if permutation.len() != rows as usize {
                    return invalid(format!(
                        "permutation has {} entries, expected {rows}",
                        permutation.len()
                    ));
                }
                Some(permutation.clone())
            }
            RowMap::BlockShuffle { seed, block } => {
                if *block == 0 || rows % block != 0 {
                    return invalid(format!("shuffle block {block} does not divide {rows}"));
                }
                Some(block_shuffle(rows, *block, *seed))
            }
        };
        let inverse = match &forward {
            None => None,
            Some(fwd) => {
                let mut inv = vec![u32::MAX; rows as usize];
                for (logical, &phys) in fwd.iter().enumerate() {
                    if phys >= rows || inv[phys as usize] != u32::MAX {
                        return invalid("row map is not a bijection".into());
                    }
                    inv[phys as usize] = logical as u32;
                }
                Some(inv)
            }
        };
        Ok(ChipProfile { spec, forward, inverse })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::InvalidProfile(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::InvalidProfile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profiles always serialize")
    }

    pub fn spec(&self) -> &ProfileSpec<S> {
        &self.spec
    }

    pub fn params(&self) -> &MechanismParams<S> {
        &self.spec.mechanism_params
    }

    pub fn rows(&self) -> u32 {
        self.spec.rows_per_bank
    }

    pub fn columns(&self) -> u32 {
        self.spec.columns_per_row
    }

    pub fn seed(&self) -> u64 {
        self.spec.master_seed
    }

    /// `<mfr>-<density>-<rev>`, e.g. `S-8Gb-B`.
    pub fn name(&self) -> String {
        format!(
            "{}-{}-{}",
            self.spec.manufacturer, self.spec.die_density, self.spec.die_revision
        )
    }

    /// Applies a modification to the underlying document and re-validates.
    pub fn modified(&self, f: impl FnOnce(&mut ProfileSpec<S>)) -> Result<Self, ModelError> {
        let mut spec = self.spec.clone();
        f(&mut spec);
        ChipProfile::new(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.spec.master_seed = seed;
        p
    }

    /// Same chip with its mechanism parameters replaced by the given mode's
    /// template. Threshold populations are kept.
    pub fn with_mode(&self, mode: Mode) -> Self {
        if self.params().mode == mode {
            return self.clone();
        }
        let mut p = self.clone();
        p.spec.mechanism_params = MechanismParams::template(mode, self.params().thresholds);
        p
    }

    pub fn to_physical(&self, row: LogicalRow) -> Result<PhysicalRow, ModelError> {
        self.check_row(row.0)?;
        Ok(PhysicalRow(match &self.forward {
            None => row.0,
            Some(f) => f[row.0 as usize],
        }))
    }

    pub fn to_logical(&self, row: PhysicalRow) -> Result<LogicalRow, ModelError> {
        self.check_row(row.0)?;
        Ok(LogicalRow(match &self.inverse {
            None => row.0,
            Some(inv) => inv[row.0 as usize],
        }))
    }

    pub fn subarray_of(&self, row: PhysicalRow) -> u32 {
        row.0 / self.spec.subarray_size
    }

    pub fn subarray_count(&self) -> u32 {
        self.spec.rows_per_bank / self.spec.subarray_size
    }

    pub fn is_remapped(&self, row: PhysicalRow) -> bool {
        self.spec.remapped_rows.contains(&row.0)
    }

    pub fn encoding_of(&self, row: PhysicalRow) -> Result<CellEncoding, ModelError> {
        self.check_row(row.0)?;
        Ok(self.encoding_unchecked(row))
    }

    pub(crate) fn encoding_unchecked(&self, row: PhysicalRow) -> CellEncoding {
        self.spec
            .cell_encoding_policy
            .encoding_of_subarray(self.subarray_of(row))
    }

    /// Physically adjacent wordlines that can disturb (or be disturbed by)
    /// `row`: same subarray and not remapped. Returns `(lower, upper)`.
    pub fn physical_neighbors(&self, row: PhysicalRow) -> (Option<PhysicalRow>, Option<PhysicalRow>) {
        if self.is_remapped(row) {
            return (None, None);
        }
        let sub = self.subarray_of(row);
        let pick = |cand: Option<u32>| {
            cand.map(PhysicalRow)
                .filter(|&c| c.0 < self.rows() && self.subarray_of(c) == sub && !self.is_remapped(c))
        };
        (pick(row.0.checked_sub(1)), pick(row.0.checked_add(1)))
    }

    fn check_row(&self, row: u32) -> Result<(), ModelError> {
        if row < self.spec.rows_per_bank {
            Ok(())
        } else {
            Err(ModelError::RowOutOfRange { row, rows: self.spec.rows_per_bank })
        }
    }
}

fn block_shuffle(rows: u32, block: u32, seed: u64) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..rows).collect();
    for (b, chunk) in perm.chunks_mut(block as usize).enumerate() {
        let mut rng = CounterRng::keyed(&[seed, 0x5EED_0F_AB1E, b as u64]);
        for i in (1..chunk.len()).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            chunk.swap(i, j);
        }
    }
    perm
}
