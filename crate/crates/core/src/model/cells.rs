use std::collections::BTreeMap;
use std::sync::Arc;

use bitvec::prelude::*;

use super::{CellEncoding, ChipProfile, EncodingPolicy, ModelError, PhysicalRow, Side};
use crate::disturb::{DisturbDirection, RowVulnerability};
use crate::{Scalar, Time};

/// Data and disturbance state of one materialized row.
///
/// Cells of the same column parity see the same wordline roles and hence
/// receive identical doses, so accumulators are stored per
/// `[parity][direction]` rather than per cell.
#[derive(Clone, Debug)]
pub(crate) struct RowState<S> {
    pub(crate) bits: BitVec<u64, Lsb0>,
    /// Cells that flipped since the last restore; a flipped cell stays
    /// flipped until the row is restored.
    pub(crate) latched: BitVec<u64, Lsb0>,
    pub(crate) any_latched: bool,
    pub(crate) acc: [[S; 2]; 2],
    /// Per `[parity][direction]`, how far into the sorted threshold list the
    /// accumulator has already been compared.
    pub(crate) cursor: [[usize; 2]; 2],
    pub(crate) restored_at: Time,
    /// Side of the most recent neighbor activation.
    pub(crate) last_neighbor: Option<Side>,
    /// Whether that activation alternated with the other neighbor.
    pub(crate) alternating: bool,
    pub(crate) vulnerability: Option<Arc<RowVulnerability<S>>>,
}

impl<S: Scalar> RowState<S> {
    fn new(columns: usize, now: Time) -> Self {
        RowState {
            bits: bitvec![u64, Lsb0; 0; columns],
            latched: bitvec![u64, Lsb0; 0; columns],
            any_latched: false,
            acc: [[S::zero(); 2]; 2],
            cursor: [[0; 2]; 2],
            restored_at: now,
            last_neighbor: None,
            alternating: false,
            vulnerability: None,
        }
    }

    pub(crate) fn restore(&mut self, now: Time) {
        self.acc = [[S::zero(); 2]; 2];
        self.cursor = [[0; 2]; 2];
        if self.any_latched {
            self.latched.fill(false);
            self.any_latched = false;
        }
        self.restored_at = now;
        self.last_neighbor = None;
        self.alternating = false;
    }
}

/// Logical contents and accumulated disturbance of one bank.
///
/// Rows are materialized on first initialization; rows that never held data
/// are not tracked and ignore disturbance. Single-writer: concurrent
/// experiments use separate arrays.
#[derive(Clone, Debug)]
pub struct CellArray<S: Scalar = f64> {
    columns: u32,
    rows_per_bank: u32,
    subarray_size: u32,
    policy: EncodingPolicy,
    pub(crate) rows: BTreeMap<PhysicalRow, RowState<S>>,
    /// Pattern held by every row that is not materialized, if any.
    background: Option<u8>,
    now: Time,
}

impl<S: Scalar> CellArray<S> {
    pub fn for_profile(profile: &ChipProfile<S>) -> Self {
        let spec = profile.spec();
        CellArray {
            columns: spec.columns_per_row,
            rows_per_bank: spec.rows_per_bank,
            subarray_size: spec.subarray_size,
            policy: spec.cell_encoding_policy,
            rows: BTreeMap::new(),
            background: None,
            now: Time::ZERO,
        }
    }

    pub fn columns(&self) -> u32 {
        self.columns
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub(crate) fn set_now(&mut self, t: Time) {
        debug_assert!(t >= self.now);
        self.now = t;
    }

    pub fn encoding(&self, row: PhysicalRow) -> CellEncoding {
        self.policy.encoding_of_subarray(row.0 / self.subarray_size)
    }

    pub fn is_materialized(&self, row: PhysicalRow) -> bool {
        self.rows.contains_key(&row)
    }

    pub fn materialized_rows(&self) -> impl Iterator<Item = PhysicalRow> + '_ {
        self.rows.keys().copied()
    }

    /// Writes `pattern` to every byte of the row and restores it.
    pub fn init_row(&mut self, row: PhysicalRow, pattern: u8) -> Result<(), ModelError> {
        if pattern != 0x00 && pattern != 0xFF {
            return Err(ModelError::UnsupportedPattern(pattern));
        }
        self.check_row(row)?;
        let (columns, now) = (self.columns as usize, self.now);
        let state = self.rows.entry(row).or_insert_with(|| RowState::new(columns, now));
        state.bits.fill(pattern == 0xFF);
        state.restore(now);
        Ok(())
    }

    /// Initializes the whole bank to `pattern`. Rows are materialized
    /// lazily, the first time they receive disturbance or an explicit
    /// initialization.
    pub fn init_all(&mut self, pattern: u8) -> Result<(), ModelError> {
        if pattern != 0x00 && pattern != 0xFF {
            return Err(ModelError::UnsupportedPattern(pattern));
        }
        self.rows.clear();
        self.background = Some(pattern);
        Ok(())
    }

    pub fn background(&self) -> Option<u8> {
        self.background
    }

    /// Drops every materialized row, returning rows to the background
    /// pattern (or to holding no data).
    pub fn clear_rows(&mut self) {
        self.rows.clear();
    }

    /// State of a row that holds data, materializing it from the background
    /// pattern if needed.
    pub(crate) fn touch(&mut self, row: PhysicalRow) -> Option<&mut RowState<S>> {
        let (columns, now) = (self.columns as usize, self.now);
        match self.background {
            Some(pattern) if row.0 < self.rows_per_bank => Some(self.rows.entry(row).or_insert_with(|| {
                let mut state = RowState::new(columns, now);
                state.bits.fill(pattern == 0xFF);
                state
            })),
            _ => self.rows.get_mut(&row),
        }
    }

    /// Byte-granular write (one x8 column access). The row must be open,
    /// which the command engine guarantees; an open row is always restored.
    pub fn write_byte(&mut self, row: PhysicalRow, byte: u32, data: u8) -> Result<(), ModelError> {
        self.check_row(row)?;
        if byte >= self.columns / 8 {
            return Err(ModelError::ColumnOutOfRange { column: byte * 8, columns: self.columns });
        }
        let (columns, now) = (self.columns as usize, self.now);
        let state = self.rows.entry(row).or_insert_with(|| RowState::new(columns, now));
        let start = byte as usize * 8;
        for i in 0..8 {
            state.bits.set(start + i, data & (1 << i) != 0);
        }
        Ok(())
    }

    pub fn read_byte(&self, row: PhysicalRow, byte: u32) -> Result<u8, ModelError> {
        let state = self.state(row)?;
        if byte >= self.columns / 8 {
            return Err(ModelError::ColumnOutOfRange { column: byte * 8, columns: self.columns });
        }
        let start = byte as usize * 8;
        Ok((0..8).fold(0u8, |acc, i| acc | ((state.bits[start + i] as u8) << i)))
    }

    pub fn bit(&self, row: PhysicalRow, column: u32) -> Result<bool, ModelError> {
        let state = self.state(row)?;
        self.check_column(column)?;
        Ok(state.bits[column as usize])
    }

    pub fn is_charged(&self, row: PhysicalRow, column: u32) -> Result<bool, ModelError> {
        Ok(self.encoding(row).is_charged(self.bit(row, column)?))
    }

    pub fn row_bits(&self, row: PhysicalRow) -> Option<&BitSlice<u64, Lsb0>> {
        self.rows.get(&row).map(|s| s.bits.as_bitslice())
    }

    /// Number of cells whose logical value differs from a uniform pattern.
    pub fn count_mismatches(&self, row: PhysicalRow, pattern: u8) -> Result<u32, ModelError> {
        if pattern != 0x00 && pattern != 0xFF {
            return Err(ModelError::UnsupportedPattern(pattern));
        }
        let state = self.state(row)?;
        let n = if pattern == 0xFF { state.bits.count_zeros() } else { state.bits.count_ones() };
        Ok(n as u32)
    }

    /// Disturbance accumulated by one cell toward `direction` since its row
    /// was last restored.
    pub fn accumulator(&self, row: PhysicalRow, column: u32, direction: DisturbDirection) -> Result<S, ModelError> {
        let state = self.state(row)?;
        self.check_column(column)?;
        Ok(state.acc[(column % 2) as usize][direction.index()])
    }

    /// Time since the row was last restored (activation or refresh).
    pub fn retention_clock(&self, row: PhysicalRow) -> Result<Time, ModelError> {
        Ok(self.now - self.state(row)?.restored_at)
    }

    /// Restores a row if it holds data: accumulators and retention clock go
    /// to zero, data (including earlier flips) is kept.
    pub fn restore(&mut self, row: PhysicalRow) {
        let now = self.now;
        if let Some(state) = self.rows.get_mut(&row) {
            state.restore(now);
        }
    }

    pub fn restore_all(&mut self) {
        let now = self.now;
        for state in self.rows.values_mut() {
            state.restore(now);
        }
    }

    /// Drops cached threshold samples. They are a pure function of the
    /// profile and are re-sampled on demand.
    pub fn evict_vulnerabilities(&mut self) {
        for state in self.rows.values_mut() {
            state.vulnerability = None;
        }
    }

    /// Installs a precomputed threshold set for a materialized row.
    pub fn install_vulnerability(&mut self, row: PhysicalRow, v: Arc<RowVulnerability<S>>) -> Result<(), ModelError> {
        self.state_mut(row)?.vulnerability = Some(v);
        Ok(())
    }

    pub(crate) fn state(&self, row: PhysicalRow) -> Result<&RowState<S>, ModelError> {
        self.check_row(row)?;
        self.rows.get(&row).ok_or(ModelError::RowNotInitialized(row))
    }

    pub(crate) fn state_mut(&mut self, row: PhysicalRow) -> Result<&mut RowState<S>, ModelError> {
        self.check_row(row)?;
        self.rows.get_mut(&row).ok_or(ModelError::RowNotInitialized(row))
    }

    fn check_row(&self, row: PhysicalRow) -> Result<(), ModelError> {
        if row.0 < self.rows_per_bank {
            Ok(())
        } else {
            Err(ModelError::RowOutOfRange { row: row.0, rows: self.rows_per_bank })
        }
    }

    fn check_column(&self, column: u32) -> Result<(), ModelError> {
        if column < self.columns {
            Ok(())
        } else {
            Err(ModelError::ColumnOutOfRange { column, columns: self.columns })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturb::{MechanismParams, Mode, ThresholdDist, ThresholdSet};
    use crate::model::ProfileSpec;

    fn array(policy: EncodingPolicy) -> CellArray<f64> {
        let d = ThresholdDist { mu: 10.0, sigma: 0.5, vulnerable_fraction: 0.1 };
        let mut spec = ProfileSpec::synthetic(
            128,
            64,
            64,
            MechanismParams::template(Mode::Empirical, ThresholdSet { falling: d, rising: d }),
        );
        spec.cell_encoding_policy = policy;
        CellArray::for_profile(&ChipProfile::new(spec).unwrap())
    }

    #[test]
    fn init_sets_every_bit() {
        let mut a = array(EncodingPolicy::AllTrue);
        a.init_row(PhysicalRow(3), 0xFF).unwrap();
        assert_eq!(a.count_mismatches(PhysicalRow(3), 0xFF).unwrap(), 0);
        assert_eq!(a.count_mismatches(PhysicalRow(3), 0x00).unwrap(), 64);
        assert!((0..64).all(|c| a.bit(PhysicalRow(3), c).unwrap()));
    }

    #[test]
    fn zero_pattern_on_anti_cells_is_charged() {
        let mut a = array(EncodingPolicy::AllAnti);
        a.init_row(PhysicalRow(3), 0x00).unwrap();
        assert!((0..64).all(|c| a.is_charged(PhysicalRow(3), c).unwrap()));
    }

    #[test]
    fn unsupported_pattern_rejected() {
        let mut a = array(EncodingPolicy::AllTrue);
        assert_eq!(a.init_row(PhysicalRow(0), 0x55), Err(ModelError::UnsupportedPattern(0x55)));
        assert!(a.init_row(PhysicalRow(128), 0x00).is_err());
    }

    #[test]
    fn init_clears_prior_disturbance() {
        let mut a = array(EncodingPolicy::AllTrue);
        a.init_row(PhysicalRow(5), 0xFF).unwrap();
        a.set_now(Time::from_ns(500));
        a.rows.get_mut(&PhysicalRow(5)).unwrap().acc = [[3.0; 2]; 2];
        assert_eq!(a.accumulator(PhysicalRow(5), 1, DisturbDirection::Falling).unwrap(), 3.0);
        assert_eq!(a.retention_clock(PhysicalRow(5)).unwrap(), Time::from_ns(500));
        a.init_row(PhysicalRow(5), 0x00).unwrap();
        for d in [DisturbDirection::Falling, DisturbDirection::Rising] {
            assert_eq!(a.accumulator(PhysicalRow(5), 0, d).unwrap(), 0.0);
        }
        assert_eq!(a.retention_clock(PhysicalRow(5)).unwrap(), Time::ZERO);
    }

    #[test]
    fn byte_writes_round_trip() {
        let mut a = array(EncodingPolicy::AllTrue);
        a.init_row(PhysicalRow(1), 0x00).unwrap();
        a.write_byte(PhysicalRow(1), 2, 0xA5).unwrap();
        assert_eq!(a.read_byte(PhysicalRow(1), 2).unwrap(), 0xA5);
        assert_eq!(a.count_mismatches(PhysicalRow(1), 0x00).unwrap(), 4);
        assert!(a.write_byte(PhysicalRow(1), 8, 0).is_err());
    }
}
