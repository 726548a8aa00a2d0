use rand_distr::{Distribution, StandardNormal};

use super::{DisturbDirection, ThresholdDist};
use crate::model::{ChipProfile, PhysicalRow};
use crate::rng::CounterRng;
use crate::Scalar;

/// Thresholds of one cell, in the frame of the profile's mode. `None` is an
/// infinite threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellVulnerability<S> {
    pub falling: Option<S>,
    pub rising: Option<S>,
}

impl<S: Copy> CellVulnerability<S> {
    pub fn get(&self, dir: DisturbDirection) -> Option<S> {
        match dir {
            DisturbDirection::Falling => self.falling,
            DisturbDirection::Rising => self.rising,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdEntry<S> {
    pub threshold: S,
    pub column: u32,
}

/// Finite thresholds of one row, sorted ascending per
/// `[column parity][direction]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RowVulnerability<S> {
    columns: u32,
    lists: [[Vec<ThresholdEntry<S>>; 2]; 2],
}

impl<S: Scalar> RowVulnerability<S> {
    /// No vulnerable cells.
    pub fn empty(columns: u32) -> Self {
        RowVulnerability { columns, lists: Default::default() }
    }

    /// Builds from explicit `(column, direction, threshold)` triples.
    pub fn from_cells(columns: u32, cells: impl IntoIterator<Item = (u32, DisturbDirection, S)>) -> Self {
        let mut v = Self::empty(columns);
        for (column, dir, threshold) in cells {
            assert!(column < columns, "column {column} out of range");
            v.lists[(column & 1) as usize][dir.index()].push(ThresholdEntry { threshold, column });
        }
        v.sort();
        v
    }

    fn sort(&mut self) {
        for parity in &mut self.lists {
            for list in parity {
                list.sort_unstable_by_key(|e| (e.threshold.to_f64_lossy().to_bits(), e.column));
            }
        }
    }

    pub fn columns(&self) -> u32 {
        self.columns
    }

    pub fn list(&self, parity: usize, dir: DisturbDirection) -> &[ThresholdEntry<S>] {
        &self.lists[parity][dir.index()]
    }

    pub fn vulnerable_count(&self, dir: DisturbDirection) -> usize {
        self.lists[0][dir.index()].len() + self.lists[1][dir.index()].len()
    }

    pub fn min_threshold(&self, dir: DisturbDirection) -> Option<S> {
        let a = self.lists[0][dir.index()].first().map(|e| e.threshold);
        let b = self.lists[1][dir.index()].first().map(|e| e.threshold);
        match (a, b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn cell(&self, column: u32) -> CellVulnerability<S> {
        let find = |dir: DisturbDirection| {
            self.list((column & 1) as usize, dir)
                .iter()
                .find(|e| e.column == column)
                .map(|e| e.threshold)
        };
        CellVulnerability { falling: find(DisturbDirection::Falling), rising: find(DisturbDirection::Rising) }
    }

    /// Per-cell view, indexed by column.
    pub fn cells(&self) -> Vec<CellVulnerability<S>> {
        let mut out = vec![CellVulnerability { falling: None, rising: None }; self.columns as usize];
        for parity in 0..2 {
            for dir in DisturbDirection::BOTH {
                for e in self.list(parity, dir) {
                    let c = &mut out[e.column as usize];
                    match dir {
                        DisturbDirection::Falling => c.falling = Some(e.threshold),
                        DisturbDirection::Rising => c.rising = Some(e.threshold),
                    }
                }
            }
        }
        out
    }
}

/// Uniform draw deciding vulnerability and the standard-normal draw shaping
/// the threshold of one cell. The normal is independent of the uniform.
pub fn cell_draw(seed: u64, row: PhysicalRow, column: u32, dir: DisturbDirection) -> (f64, f64) {
    let mut rng = CounterRng::keyed(&[seed, row.0 as u64, column as u64, dir.index() as u64]);
    let u = rng.next_f64();
    let z: f64 = StandardNormal.sample(&mut rng);
    (u, z)
}

/// Same stream as [`cell_draw`], from the hash of `[seed, row]`.
#[inline]
fn threshold_of<S: Scalar>(dist: &ThresholdDist<S>, p: f64, row_key: u64, column: u32, dir: DisturbDirection) -> Option<S> {
    let mut rng = CounterRng::extend(row_key, &[column as u64, dir.index() as u64]);
    let u = rng.next_f64();
    if u >= p {
        return None;
    }
    let z: f64 = StandardNormal.sample(&mut rng);
    let t = (dist.mu + dist.sigma * S::lit(z)).exp();
    (t > S::zero() && t.is_finite()).then_some(t)
}

/// Thresholds of every cell of a row. A pure function of the profile's
/// master seed and threshold distributions.
pub fn sample_vulnerabilities<S: Scalar>(profile: &ChipProfile<S>, row: PhysicalRow) -> RowVulnerability<S> {
    let columns = profile.columns();
    let seed = profile.seed();
    let thresholds = &profile.params().thresholds;
    let mut v = RowVulnerability::empty(columns);
    let row_key = CounterRng::prefix(&[seed, row.0 as u64]);
    for dir in DisturbDirection::BOTH {
        let dist = thresholds.get(dir);
        if dist.vulnerable_fraction <= S::zero() {
            continue;
        }
        let p = dist.vulnerable_fraction.to_f64_lossy();
        for column in 0..columns {
            if let Some(threshold) = threshold_of(dist, p, row_key, column, dir) {
                v.lists[(column & 1) as usize][dir.index()].push(ThresholdEntry { threshold, column });
            }
        }
    }
    v.sort();
    v
}
