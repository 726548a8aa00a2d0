use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_victim, Bench, ExperimentConfig, HcOutcome, ProtocolError, RetentionRow, SkipReason, classify_row_retention};
use crate::model::{ChipProfile, DataDirection, LogicalRow, Side};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Experiment {
    HcFirst,
    MaxFlips,
    HcExceeds,
    RowPress,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::HcFirst, Experiment::MaxFlips, Experiment::HcExceeds, Experiment::RowPress];

    /// Result file stem and CLI subcommand name.
    pub fn name(self) -> &'static str {
        match self {
            Experiment::HcFirst => "hcfirst",
            Experiment::MaxFlips => "maxflips",
            Experiment::HcExceeds => "hcexceeds",
            Experiment::RowPress => "rowpress",
        }
    }
}

/// Per-row measurements. Unmeasured fields are `None`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowResult {
    pub row: LogicalRow,
    pub skipped: Option<SkipReason>,
    /// Indexed by [`DataDirection::index`].
    pub hc_first: [Option<HcOutcome>; 2],
    pub maxflips: [Option<u32>; 2],
    pub hc_exceeds: Option<HcOutcome>,
    /// Indexed by `[Side::index][DataDirection::index]`.
    pub rowpress: [[Option<u32>; 2]; 2],
}

impl RowResult {
    pub fn new(row: LogicalRow) -> Self {
        RowResult { row, skipped: None, hc_first: [None; 2], maxflips: [None; 2], hc_exceeds: None, rowpress: [[None; 2]; 2] }
    }

    pub fn skipped(row: LogicalRow, reason: SkipReason) -> Self {
        RowResult { skipped: Some(reason), ..Self::new(row) }
    }

    pub fn hc_first(&self, d: DataDirection) -> Option<HcOutcome> {
        self.hc_first[d.index()]
    }

    pub fn maxflips(&self, d: DataDirection) -> Option<u32> {
        self.maxflips[d.index()]
    }

    pub fn rowpress(&self, side: Side, d: DataDirection) -> Option<u32> {
        self.rowpress[side.index()][d.index()]
    }

    /// Fills fields that are unset here from `other`.
    pub fn merge(&mut self, other: &RowResult) {
        debug_assert_eq!(self.row, other.row);
        self.skipped = self.skipped.or(other.skipped);
        for i in 0..2 {
            self.hc_first[i] = self.hc_first[i].or(other.hc_first[i]);
            self.maxflips[i] = self.maxflips[i].or(other.maxflips[i]);
            for j in 0..2 {
                self.rowpress[i][j] = self.rowpress[i][j].or(other.rowpress[i][j]);
            }
        }
        self.hc_exceeds = self.hc_exceeds.or(other.hc_exceeds);
    }
}

/// The first `n` measurable logical rows in address order, together with
/// every skipped row met along the way.
pub fn select_rows<S: Scalar>(profile: &ChipProfile<S>, n: u32) -> Vec<(LogicalRow, Option<SkipReason>)> {
    let mut out = Vec::new();
    let mut measured = 0;
    for r in 0..profile.rows() {
        if measured == n {
            break;
        }
        match resolve_victim(profile, LogicalRow(r)) {
            Ok(_) => {
                measured += 1;
                out.push((LogicalRow(r), None));
            }
            Err(ProtocolError::Skipped(reason)) => out.push((LogicalRow(r), Some(reason))),
            Err(_) => unreachable!("row {r} is in range"),
        }
    }
    out
}

fn measure<S: Scalar>(bench: &mut Bench<'_, S>, row: LogicalRow, experiments: &[Experiment], cfg: &ExperimentConfig) -> Result<RowResult, ProtocolError> {
    let mut r = RowResult::new(row);
    for &experiment in experiments {
        measure_one(bench, &mut r, experiment, cfg)?;
    }
    Ok(r)
}

fn measure_one<S: Scalar>(bench: &mut Bench<'_, S>, r: &mut RowResult, experiment: Experiment, cfg: &ExperimentConfig) -> Result<(), ProtocolError> {
    let row = r.row;
    match experiment {
        Experiment::HcFirst => {
            for d in DataDirection::BOTH {
                r.hc_first[d.index()] = Some(bench.run_hc_first(row, d, cfg)?);
            }
        }
        Experiment::MaxFlips => {
            for d in DataDirection::BOTH {
                r.maxflips[d.index()] = Some(bench.run_max_bitflips(row, d, cfg)?);
            }
        }
        Experiment::HcExceeds => {
            let start = match r.hc_first(DataDirection::ZeroToOne) {
                Some(hc) => hc,
                None => bench.run_hc_first(row, DataDirection::ZeroToOne, cfg)?,
            };
            r.hc_first[DataDirection::ZeroToOne.index()] = Some(start);
            r.hc_exceeds = Some(bench.run_hc_exceeds(row, start, cfg)?);
        }
        Experiment::RowPress => {
            for side in Side::BOTH {
                for d in DataDirection::BOTH {
                    r.rowpress[side.index()][d.index()] = Some(bench.run_rowpress(row, side, d, cfg)?);
                }
            }
        }
    }
    Ok(())
}

/// Runs `f` on a pool of `threads` workers (0 picks the default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Runs one experiment over the configured row set. Each row gets its own
/// bench; results come back in row order regardless of scheduling.
pub fn run_experiment<S: Scalar>(
    profile: &ChipProfile<S>,
    cfg: &ExperimentConfig,
    experiment: Experiment,
    strict_timing: bool,
) -> Result<(Vec<RowResult>, Vec<String>), ProtocolError> {
    run_experiments(profile, cfg, &[experiment], strict_timing)
}

/// Runs several experiments on each row with one bench, so each row's
/// thresholds are sampled once. Equivalent to merging separate runs.
pub fn run_experiments<S: Scalar>(
    profile: &ChipProfile<S>,
    cfg: &ExperimentConfig,
    experiments: &[Experiment],
    strict_timing: bool,
) -> Result<(Vec<RowResult>, Vec<String>), ProtocolError> {
    cfg.validate()?;
    let rows = select_rows(profile, cfg.rows_to_test);
    let results: Vec<Result<(RowResult, Vec<String>), ProtocolError>> = rows
        .par_iter()
        .map(|&(row, skip)| {
            if let Some(reason) = skip {
                return Ok((RowResult::skipped(row, reason), Vec::new()));
            }
            let mut bench = Bench::new(profile).strict_timing(strict_timing);
            let r = measure(&mut bench, row, experiments, cfg)?;
            Ok((r, bench.warnings().to_vec()))
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut warnings: Vec<String> = Vec::new();
    for item in results {
        let (r, w) = item?;
        for w in w {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        out.push(r);
    }
    Ok((out, warnings))
}

/// Retention failures under 0xFF and 0x00 for the configured rows (no skip
/// rule: retention involves no neighbors).
pub fn run_retention_rows<S: Scalar>(profile: &ChipProfile<S>, cfg: &ExperimentConfig) -> Result<Vec<(LogicalRow, RetentionRow)>, ProtocolError> {
    cfg.validate()?;
    let rows: Vec<LogicalRow> = (0..cfg.rows_to_test.min(profile.rows())).map(LogicalRow).collect();
    rows.par_iter()
        .map(|&row| {
            let mut bench = Bench::new(profile);
            let phys = profile.to_physical(row)?;
            Ok((row, classify_row_retention(&mut bench, phys, cfg)?))
        })
        .collect()
}
