use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bench, ExperimentConfig, ProtocolError};
use crate::engine::{build_hammer_program, execute, ExecOptions, T_RAS};
use crate::model::{CellEncoding, ChipProfile, LogicalRow, PhysicalRow};
use crate::Scalar;

/// Neighbors observed for each hammered row, as logical addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMappingReport {
    pub neighbors: BTreeMap<LogicalRow, Vec<LogicalRow>>,
    pub undetectable: Vec<LogicalRow>,
}

impl RowMappingReport {
    pub fn status(&self, row: LogicalRow) -> Result<&[LogicalRow], ProtocolError> {
        match self.neighbors.get(&row) {
            Some(n) => Ok(n),
            None => Err(ProtocolError::UndetectableNeighbor(row)),
        }
    }
}

/// Rows other than the aggressor that flipped after hammering it with the
/// whole bank at `background`.
fn flipped_rows<S: Scalar>(
    bench: &mut Bench<'_, S>,
    aggressor: PhysicalRow,
    background: u8,
    cfg: &ExperimentConfig,
    options: ExecOptions,
) -> Result<Vec<PhysicalRow>, ProtocolError> {
    let profile = bench.profile();
    let array = bench.array_mut();
    array.init_all(background)?;
    array.init_row(aggressor, !background)?;
    let program = build_hammer_program(&[aggressor], cfg.reveng_count, T_RAS)?;
    execute(profile, array, &program, S::lit(cfg.hammer_temp()), options)?;
    let mut out = Vec::new();
    for row in array.materialized_rows().collect::<Vec<_>>() {
        if row != aggressor && array.count_mismatches(row, background)? > 0 {
            out.push(row);
        }
    }
    array.clear_rows();
    Ok(out)
}

/// Single-sided hammers each row in `rows` and records which rows show
/// bitflips. Victims first hold 0xFF with the aggressor at 0x00; when that
/// reveals fewer than two neighbors the pass is repeated with the data
/// inverted.
pub fn reveng_row_mapping<S: Scalar>(
    profile: &ChipProfile<S>,
    rows: &[LogicalRow],
    cfg: &ExperimentConfig,
    strict_timing: bool,
) -> Result<RowMappingReport, ProtocolError> {
    cfg.validate()?;
    let options = ExecOptions { strict_window: strict_timing, collect_flips: false };
    let found: Vec<Result<(LogicalRow, Vec<LogicalRow>), ProtocolError>> = rows
        .par_iter()
        .map(|&row| {
            let aggressor = profile.to_physical(row)?;
            let mut bench = Bench::new(profile);
            let mut hits = flipped_rows(&mut bench, aggressor, 0xFF, cfg, options)?;
            if hits.len() < 2 {
                hits.extend(flipped_rows(&mut bench, aggressor, 0x00, cfg, options)?);
            }
            let mut logical: Vec<LogicalRow> = hits.into_iter().map(|r| profile.to_logical(r)).collect::<Result<_, _>>()?;
            logical.sort();
            logical.dedup();
            Ok((row, logical))
        })
        .collect();
    let mut report = RowMappingReport::default();
    for item in found {
        let (row, neighbors) = item?;
        if neighbors.is_empty() {
            report.undetectable.push(row);
        } else {
            report.neighbors.insert(row, neighbors);
        }
    }
    Ok(report)
}

/// Retention failures of one row under both uniform patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionRow {
    pub row: PhysicalRow,
    pub flips_ones: u32,
    pub flips_zeros: u32,
}

impl RetentionRow {
    /// Only charged cells leak: a row failing only when holding ones stores
    /// ones as charge (true cells), and the converse for anti cells.
    pub fn encoding(&self) -> Option<CellEncoding> {
        match (self.flips_ones > 0, self.flips_zeros > 0) {
            (true, false) => Some(CellEncoding::TrueCell),
            (false, true) => Some(CellEncoding::AntiCell),
            _ => None,
        }
    }
}

pub fn classify_row_retention<S: Scalar>(bench: &mut Bench<'_, S>, row: PhysicalRow, cfg: &ExperimentConfig) -> Result<RetentionRow, ProtocolError> {
    let flips_ones = bench.run_retention(row, 0xFF, cfg)?;
    let flips_zeros = bench.run_retention(row, 0x00, cfg)?;
    Ok(RetentionRow { row, flips_ones, flips_zeros })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayEncoding {
    pub subarray: u32,
    /// `None` when no tested row was conclusive or rows disagreed.
    pub encoding: Option<CellEncoding>,
    pub true_rows: u32,
    pub anti_rows: u32,
    pub inconclusive_rows: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLayoutReport {
    pub subarrays: Vec<SubarrayEncoding>,
}

impl CellLayoutReport {
    pub fn encoding_of(&self, subarray: u32) -> Option<CellEncoding> {
        self.subarrays.get(subarray as usize).and_then(|s| s.encoding)
    }
}

/// Classifies every subarray as true- or anti-cell from retention failures
/// of its first few non-remapped rows.
pub fn reveng_true_anti<S: Scalar>(profile: &ChipProfile<S>, cfg: &ExperimentConfig) -> Result<CellLayoutReport, ProtocolError> {
    cfg.validate()?;
    let size = profile.spec().subarray_size;
    let per = cfg.reveng_rows_per_subarray;
    let rows: Vec<(u32, PhysicalRow)> = (0..profile.subarray_count())
        .flat_map(|sub| {
            let first = sub * size;
            let last = (first + size).min(profile.rows());
            (first..last)
                .map(PhysicalRow)
                .filter(|&r| !profile.is_remapped(r))
                .take(per as usize)
                .map(move |r| (sub, r))
        })
        .collect();
    let measured: Vec<Result<(u32, RetentionRow), ProtocolError>> = rows
        .par_iter()
        .map(|&(sub, row)| {
            let mut bench = Bench::new(profile);
            Ok((sub, classify_row_retention(&mut bench, row, cfg)?))
        })
        .collect();
    let mut subarrays: Vec<SubarrayEncoding> = (0..profile.subarray_count())
        .map(|subarray| SubarrayEncoding { subarray, encoding: None, true_rows: 0, anti_rows: 0, inconclusive_rows: 0 })
        .collect();
    for item in measured {
        let (sub, r) = item?;
        let s = &mut subarrays[sub as usize];
        match r.encoding() {
            Some(CellEncoding::TrueCell) => s.true_rows += 1,
            Some(CellEncoding::AntiCell) => s.anti_rows += 1,
            None => s.inconclusive_rows += 1,
        }
    }
    for s in &mut subarrays {
        s.encoding = match (s.true_rows > 0, s.anti_rows > 0) {
            (true, false) => Some(CellEncoding::TrueCell),
            (false, true) => Some(CellEncoding::AntiCell),
            _ => None,
        };
    }
    Ok(CellLayoutReport { subarrays })
}
