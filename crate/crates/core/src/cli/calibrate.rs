use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturb::{cell_draw, DisturbDirection, RowVulnerability, ThresholdDist, ThresholdSet};
use crate::model::{ChipProfile, DataDirection, LogicalRow, ModelError, PhysicalRow};
use crate::protocols::{resolve_victim, Bench, ExperimentConfig, ProtocolError};
use crate::{Scalar, TOOL_VERSION};

/// Metric order used by targets, achieved values and errors.
pub const METRICS: [&str; 5] = ["hc_first_0to1", "hc_first_1to0", "maxflips_0to1", "maxflips_1to0", "hc_exceeds"];

/// Provenance of fitted threshold parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub metrics: Vec<String>,
    pub targets: [f64; 5],
    pub achieved: [f64; 5],
    pub relative_errors: [f64; 5],
    pub sample_rows: u32,
    pub passes: u32,
    pub tool_version: String,
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub sample_rows: u32,
    /// Coordinate-search passes allowed; 0 only accepts an already fitted
    /// profile.
    pub max_passes: u32,
    /// Largest acceptable relative error per metric.
    pub tolerance: f64,
    pub config: ExperimentConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions { sample_rows: 128, max_passes: 60, tolerance: 0.05, config: ExperimentConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration did not converge after {passes} passes; best relative errors {errors:?}")]
    CalibrationFailed { passes: u32, errors: [f64; 5] },
    #[error("calibration targets must be positive and finite")]
    InvalidTargets,
    #[error("profile has no measurable rows")]
    NoRows,
    #[error("data directions map to different threshold populations on different rows")]
    MixedFrames,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Accumulated dose after `k` double-sided pairs, per frame direction and
/// column parity: exact for the engine's loop execution.
#[derive(Clone, Copy, Debug)]
struct DoseCurve {
    one: f64,
    two: f64,
}

impl DoseCurve {
    fn at(&self, k: u64) -> f64 {
        match k {
            0 => 0.0,
            1 => self.one,
            _ => self.two + (self.two - self.one) * (k - 2) as f64,
        }
    }

    /// Smallest pair count whose dose reaches `t`, if any.
    fn onset(&self, t: f64) -> Option<u64> {
        if t <= self.one {
            return (self.one > 0.0).then_some(1);
        }
        if t <= self.two {
            return Some(2);
        }
        let slope = self.two - self.one;
        if slope <= 0.0 {
            return None;
        }
        let mut k = 2 + ((t - self.two) / slope).ceil() as u64;
        while k > 2 && self.at(k - 1) >= t {
            k -= 1;
        }
        while self.at(k) < t {
            k += 1;
        }
        Some(k)
    }
}

fn measure_doses<S: Scalar>(profile: &ChipProfile<S>, victim: PhysicalRow, lower: PhysicalRow, upper: PhysicalRow, cfg: &ExperimentConfig) -> Result<[[DoseCurve; 2]; 2], CalibrationError> {
    let probe = profile.modified(|s| {
        s.mechanism_params.thresholds = ThresholdSet { falling: ThresholdDist::none(), rising: ThresholdDist::none() };
    })?;
    let mut bench = Bench::new(&probe);
    let mut at = |k: u64| -> Result<[[f64; 2]; 2], CalibrationError> {
        bench.array_mut().init_row(victim, 0xFF)?;
        bench.array_mut().install_vulnerability(victim, RowVulnerability::empty(probe.columns()).into())?;
        bench.hammer(victim, &[lower, upper], 0xFF, k, cfg.hammer_open, cfg.hammer_temp())?;
        let mut d = [[0.0; 2]; 2];
        for dir in DisturbDirection::BOTH {
            for parity in 0..2 {
                d[dir.index()][parity] = bench.array().accumulator(victim, parity as u32, dir)?.to_f64_lossy();
            }
        }
        Ok(d)
    };
    let (one, two) = (at(1)?, at(2)?);
    let mut out = [[DoseCurve { one: 0.0, two: 0.0 }; 2]; 2];
    for dir in 0..2 {
        for parity in 0..2 {
            out[dir][parity] = DoseCurve { one: one[dir][parity], two: two[dir][parity] };
        }
    }
    Ok(out)
}

/// Cached per-cell draws of one sampled row: for each frame direction and
/// parity, `(z, u)` sorted by `z`.
struct SampleRow {
    /// Frame direction driving each data direction on this row.
    frame: [DisturbDirection; 2],
    cells: [[Vec<(f32, f32)>; 2]; 2],
}

/// Vulnerable cells' `z` per `[row][parity]` for one direction and fraction.
struct Filtered {
    p: f64,
    z: Vec<[Vec<f32>; 2]>,
}

fn filter(rows: &[SampleRow], dir: DisturbDirection, p: f64) -> Filtered {
    let z = rows
        .par_iter()
        .map(|r| {
            let mut out: [Vec<f32>; 2] = Default::default();
            for parity in 0..2 {
                out[parity] = r.cells[dir.index()][parity].iter().filter(|c| (c.1 as f64) < p).map(|c| c.0).collect();
            }
            out
        })
        .collect();
    Filtered { p, z }
}

struct Model<'a> {
    rows: &'a [SampleRow],
    doses: [[DoseCurve; 2]; 2],
    cfg: &'a ExperimentConfig,
    /// Frame direction behind each data direction, shared by every row.
    frame: [DisturbDirection; 2],
    filtered: [Option<Filtered>; 2],
}

/// Threshold parameters: `[mu, sigma, p]` for falling then rising.
type Point = [f64; 6];

fn dist_of(x: &Point, dir: DisturbDirection) -> (f64, f64, f64) {
    let o = 3 * dir.index();
    (x[o], x[o + 1], x[o + 2])
}

impl Model<'_> {
    fn ensure(&mut self, dir: DisturbDirection, p: f64) {
        if self.filtered[dir.index()].as_ref().is_none_or(|f| f.p != p) {
            self.filtered[dir.index()] = Some(filter(self.rows, dir, p));
        }
    }

    fn grid(&self, k: u64) -> Option<u64> {
        let (lo, step) = (self.cfg.sweep_min, self.cfg.step);
        let c = if k <= lo { lo } else { lo + (k - lo).div_ceil(step) * step };
        (c <= self.cfg.sweep_max).then_some(c)
    }

    fn z(&self, d: DataDirection, row: usize) -> &[Vec<f32>; 2] {
        &self.filtered[self.frame[d.index()].index()].as_ref().expect("filtered").z[row]
    }

    fn count(&self, d: DataDirection, row: usize, mu: f64, sigma: f64, k: u64) -> usize {
        let dir = self.frame[d.index()];
        let z = self.z(d, row);
        (0..2)
            .map(|parity| {
                let dose = self.doses[dir.index()][parity].at(k);
                if dose <= 0.0 {
                    return 0;
                }
                let cut = (dose.ln() - mu) / sigma;
                z[parity].partition_point(|&v| (v as f64) <= cut)
            })
            .sum()
    }

    fn first(&self, d: DataDirection, row: usize, mu: f64, sigma: f64) -> Option<u64> {
        let dir = self.frame[d.index()];
        let z = self.z(d, row);
        (0..2)
            .filter_map(|parity| {
                let t = (mu + sigma * *z[parity].first()? as f64).exp();
                self.doses[dir.index()][parity].onset(t).and_then(|k| self.grid(k))
            })
            .min()
    }

    /// Mean HC_First (NaN when no row flips) and mean maximum bitflip count
    /// for one data direction.
    fn direction_metrics(&self, d: DataDirection, mu: f64, sigma: f64) -> (f64, f64) {
        let (mut hc, mut found, mut mf) = (0.0, 0u32, 0.0);
        for row in 0..self.rows.len() {
            if let Some(c) = self.first(d, row, mu, sigma) {
                hc += c as f64;
                found += 1;
            }
            mf += self.count(d, row, mu, sigma, self.cfg.sweep_max) as f64;
        }
        let n = self.rows.len() as f64;
        (if found > 0 { hc / found as f64 } else { f64::NAN }, mf / n)
    }

    fn evaluate(&mut self, x: &Point) -> [f64; 5] {
        for dir in DisturbDirection::BOTH {
            self.ensure(dir, dist_of(x, dir).2);
        }
        let params = |d: DataDirection| {
            let (mu, sigma, _) = dist_of(x, self.frame[d.index()]);
            (mu, sigma)
        };
        let (zo, oz) = (DataDirection::ZeroToOne, DataDirection::OneToZero);
        let (a, b) = (params(zo), params(oz));
        let (hc01, mf01) = self.direction_metrics(zo, a.0, a.1);
        let (hc10, mf10) = self.direction_metrics(oz, b.0, b.1);
        let (mut ex, mut found) = (0.0, 0u32);
        for row in 0..self.rows.len() {
            let Some(mut c) = self.first(zo, row, a.0, a.1) else { continue };
            while c <= self.cfg.sweep_max {
                if self.count(oz, row, b.0, b.1, c) > self.count(zo, row, a.0, a.1, c) {
                    ex += c as f64;
                    found += 1;
                    break;
                }
                c += self.cfg.step;
            }
        }
        let ex = if found > 0 { ex / found as f64 } else { f64::NAN };
        [hc01, hc10, mf01, mf10, ex]
    }

    /// Log-normal parameters reproducing a direction's HC_First and bitflip
    /// targets for vulnerable fraction `p`: `mu` pins the count, `sigma`
    /// then sets the onset.
    fn solve_direction(&mut self, d: DataDirection, p: f64, hc_target: f64, mf_target: f64) -> (f64, f64) {
        self.ensure(self.frame[d.index()], p);
        let mu_for = |m: &Self, sigma: f64| {
            let (mut lo, mut hi) = (-10.0, 40.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if m.direction_metrics(d, mid, sigma).1 > mf_target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (mut lo, mut hi) = (0.02, 4.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let hc = self.direction_metrics(d, mu_for(self, mid), mid).0;
            if hc.is_nan() || hc > hc_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sigma = 0.5 * (lo + hi);
        (mu_for(self, sigma), sigma)
    }

    /// Best point for a pair of vulnerable fractions.
    fn point(&mut self, p: [f64; 2], targets: &[f64; 5]) -> Point {
        let mut x = [0.0; 6];
        for d in DataDirection::BOTH {
            let dir = self.frame[d.index()];
            let (mu, sigma) = self.solve_direction(d, p[dir.index()], targets[d.index()], targets[2 + d.index()]);
            let o = 3 * dir.index();
            x[o] = mu;
            x[o + 1] = sigma;
            x[o + 2] = p[dir.index()];
        }
        x
    }
}

fn errors(achieved: &[f64; 5], targets: &[f64; 5]) -> [f64; 5] {
    let mut e = [0.0; 5];
    for i in 0..5 {
        e[i] = if achieved[i].is_finite() { ((achieved[i] - targets[i]) / targets[i]).abs() } else { f64::INFINITY };
    }
    e
}

fn loss(e: &[f64; 5]) -> f64 {
    e.iter().map(|x| if x.is_finite() { x * x } else { 1e6 }).sum()
}

fn max_error(e: &[f64; 5]) -> f64 {
    e.iter().copied().fold(0.0, f64::max)
}

fn sample_rows<S: Scalar>(profile: &ChipProfile<S>, k: u32) -> Vec<crate::protocols::Victim> {
    let rows = profile.rows();
    let mut out: Vec<crate::protocols::Victim> = Vec::new();
    for i in 0..k {
        let mut r = (i as u64 * rows as u64 / k as u64) as u32;
        while r < rows {
            if let Ok(v) = resolve_victim(profile, LogicalRow(r)) {
                if out.last().is_none_or(|l| l.logical != v.logical) {
                    out.push(v);
                }
                break;
            }
            r += 1;
        }
    }
    out
}

type Best = Option<(Point, [f64; 5], [f64; 5])>;

/// Evaluates `x` and keeps it if it beats the best point so far.
fn consider(model: &mut Model, x: Point, targets: &[f64; 5], best: &mut Best) -> bool {
    let a = model.evaluate(&x);
    let e = errors(&a, targets);
    let better = best.as_ref().is_none_or(|b| loss(&e) < loss(&b.2));
    if better {
        *best = Some((x, a, e));
    }
    better
}

/// Fits the falling and rising threshold populations so that the mean
/// HC_First, maximum-count bitflips and 1→0-exceeds-0→1 count of a sample
/// of rows match `targets` (ordered as [`METRICS`]).
///
/// Every pass searches over the two vulnerable fractions; for each
/// candidate, `mu` and `sigma` of both directions are solved to match the
/// per-direction targets exactly on the sample.
pub fn calibrate<S: Scalar>(
    profile: &ChipProfile<S>,
    targets: [f64; 5],
    options: &CalibrationOptions,
) -> Result<(ChipProfile<S>, CalibrationRecord), CalibrationError> {
    if targets.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CalibrationError::InvalidTargets);
    }
    let cfg = &options.config;
    cfg.validate()?;
    let victims = sample_rows(profile, options.sample_rows);
    let Some(first) = victims.first() else {
        return Err(CalibrationError::NoRows);
    };
    let doses = measure_doses(profile, first.physical, first.lower, first.upper, cfg)?;
    let seed = profile.seed();
    let columns = profile.columns();
    let mode = profile.params().mode;
    let rows: Vec<SampleRow> = victims
        .par_iter()
        .map(|v| {
            let enc = profile.encoding_unchecked(v.physical);
            let frame = DataDirection::BOTH.map(|d| mode.frame_direction(d, enc));
            let mut cells: [[Vec<(f32, f32)>; 2]; 2] = Default::default();
            for dir in DisturbDirection::BOTH {
                for col in 0..columns {
                    let (u, z) = cell_draw(seed, v.physical, col, dir);
                    cells[dir.index()][(col & 1) as usize].push((z as f32, u as f32));
                }
                for list in &mut cells[dir.index()] {
                    list.sort_by(|a, b| a.0.total_cmp(&b.0));
                }
            }
            SampleRow { frame, cells }
        })
        .collect();
    let frame = rows[0].frame;
    if rows.iter().any(|r| r.frame != frame) {
        return Err(CalibrationError::MixedFrames);
    }
    let mut model = Model { rows: &rows, doses, cfg, frame, filtered: [None, None] };

    let mut best: Best = None;
    let current = {
        let t = &profile.params().thresholds;
        let d = |d: &ThresholdDist<S>| [d.mu.to_f64_lossy(), d.sigma.to_f64_lossy(), d.vulnerable_fraction.to_f64_lossy()];
        let (f, r) = (d(&t.falling), d(&t.rising));
        (f[2] > 0.0 && r[2] > 0.0).then(|| [f[0], f[1], f[2], r[0], r[1], r[2]])
    };
    if let Some(x) = current {
        consider(&mut model, x, &targets, &mut best);
    }
    let done = |b: &Best, tol: f64| b.as_ref().is_some_and(|b| max_error(&b.2) <= tol);
    let mut passes = 0;
    if !done(&best, options.tolerance) && options.max_passes > 0 {
        // Coarse grid over both fractions; per-direction solutions depend
        // only on their own fraction and are computed once.
        passes = 1;
        let grid: Vec<f64> = (0..14).map(|i| 0.01 * 90f64.powf(i as f64 / 13.0)).collect();
        let mut solved: [Vec<(f64, f64)>; 2] = Default::default();
        for d in DataDirection::BOTH {
            let dir = frame[d.index()];
            solved[dir.index()] = grid.iter().map(|&p| model.solve_direction(d, p, targets[d.index()], targets[2 + d.index()])).collect();
        }
        for (i, &pf) in grid.iter().enumerate() {
            for (j, &pr) in grid.iter().enumerate() {
                let (f, r) = (solved[0][i], solved[1][j]);
                consider(&mut model, [f.0, f.1, pf, r.0, r.1, pr], &targets, &mut best);
            }
        }
        // Local refinement in log-fraction space.
        let mut step = [90f64.ln() / 26.0; 2];
        while passes < options.max_passes && !done(&best, options.tolerance / 5.0) && step.iter().any(|s| *s > 1e-3) {
            passes += 1;
            let x = best.as_ref().expect("grid evaluated").0;
            let mut improved = false;
            'coords: for i in 0..2 {
                for sign in [1.0, -1.0] {
                    let mut p = [x[2], x[5]];
                    p[i] = (p[i].ln() + sign * step[i]).exp();
                    if !(1e-3..=0.95).contains(&p[i]) {
                        continue;
                    }
                    let y = model.point(p, &targets);
                    if consider(&mut model, y, &targets, &mut best) {
                        improved = true;
                        break 'coords;
                    }
                }
            }
            if !improved {
                step = step.map(|s| s / 2.0);
            }
        }
    }
    let (x, achieved, errs) = best.ok_or(CalibrationError::CalibrationFailed { passes, errors: [f64::INFINITY; 5] })?;
    if max_error(&errs) > options.tolerance {
        return Err(CalibrationError::CalibrationFailed { passes, errors: errs });
    }
    let record = CalibrationRecord {
        metrics: METRICS.iter().map(|s| s.to_string()).collect(),
        targets,
        achieved,
        relative_errors: errs,
        sample_rows: rows.len() as u32,
        passes,
        tool_version: TOOL_VERSION.to_string(),
    };
    let fitted = profile.modified(|s| {
        let t = &mut s.mechanism_params.thresholds;
        let (f, r) = (dist_of(&x, DisturbDirection::Falling), dist_of(&x, DisturbDirection::Rising));
        t.falling = ThresholdDist::new(f.0, f.1, f.2);
        t.rising = ThresholdDist::new(r.0, r.1, r.2);
        s.calibration = Some(record.clone());
    })?;
    Ok((fitted, record))
}
