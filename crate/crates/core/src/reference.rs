//! Published per-chip means for the twelve tested DDR4 die revisions, and
//! the simulated geometry used for each.

use crate::disturb::{MechanismParams, Mode, ThresholdDist, ThresholdSet};
use crate::model::{CellEncoding, ChipProfile, DieDensity, EncodingPolicy, Manufacturer, ProfileSpec, RowMap};
use crate::rng::{mix64, CounterRng};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChipReference {
    pub manufacturer: Manufacturer,
    pub die_density: DieDensity,
    pub die_revision: &'static str,
    /// Mean HC_First, `[0→1, 1→0]`.
    pub hc_first: [f64; 2],
    /// Mean bitflips at 500K activations per aggressor, `[0→1, 1→0]`.
    pub maxflips: [f64; 2],
    /// Mean HC_1→0Exceeds0→1.
    pub hc_exceeds: f64,
}

impl ChipReference {
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.manufacturer, self.die_density, self.die_revision)
    }

    /// `[hc_first_0to1, hc_first_1to0, maxflips_0to1, maxflips_1to0, hc_exceeds]`.
    pub fn targets(&self) -> [f64; 5] {
        [self.hc_first[0], self.hc_first[1], self.maxflips[0], self.maxflips[1], self.hc_exceeds]
    }
}

const fn chip(m: Manufacturer, d: DieDensity, rev: &'static str, hc: [f64; 2], mf: [f64; 2], ex: f64) -> ChipReference {
    ChipReference { manufacturer: m, die_density: d, die_revision: rev, hc_first: hc, maxflips: mf, hc_exceeds: ex }
}

use DieDensity::{Gb16, Gb8};
use Manufacturer::{H, M, S};

pub const CHIPS: [ChipReference; 12] = [
    chip(S, Gb8, "B", [43840.0, 59368.0], [1769.0, 3162.0], 241740.0),
    chip(S, Gb8, "D", [15398.0, 18041.0], [8617.0, 18803.0], 63198.0),
    chip(S, Gb8, "E", [9684.0, 11623.0], [10414.0, 25722.0], 31927.0),
    chip(S, Gb16, "M", [16732.0, 19946.0], [6235.0, 13631.0], 72188.0),
    chip(S, Gb16, "A", [16981.0, 20942.0], [6070.0, 13833.0], 78820.0),
    chip(S, Gb16, "B", [26415.0, 38774.0], [2496.0, 5564.0], 153826.0),
    chip(S, Gb16, "C", [11355.0, 13346.0], [9621.0, 23849.0], 36751.0),
    chip(H, Gb8, "C", [26500.0, 38440.0], [2461.0, 5417.0], 156087.0),
    chip(H, Gb8, "D", [22069.0, 33489.0], [2619.0, 5226.0], 141656.0),
    chip(H, Gb16, "A", [29825.0, 43326.0], [2295.0, 4807.0], 175674.0),
    chip(H, Gb16, "C", [18042.0, 28041.0], [3586.0, 6320.0], 154951.0),
    chip(M, Gb8, "E", [44468.0, 55605.0], [3555.0, 4593.0], 235454.0),
];

/// Published geometric-mean differences of the three tables, in percent.
pub const TABLE2_GEOMEAN_PCT: f64 = 24.7;
pub const TABLE3_GEOMEAN_PCT: f64 = 105.1;
pub const TABLE4_GEOMEAN_PCT: f64 = 406.5;

/// Published RowPress upper-vs-lower difference, in percent.
pub const ROWPRESS_SIDE_DIFFERENCE_PCT: f64 = 3.1;

pub fn find(name: &str) -> Option<&'static ChipReference> {
    CHIPS.iter().find(|c| c.name() == name)
}

/// Bits per row of one rank-wide row: eight x8 chips with 1 KiB pages.
pub const COLUMNS_PER_ROW: u32 = 65_536;
pub const SUBARRAY_SIZE: u32 = 1024;

/// Uncalibrated profile with the chip's geometry and layout. Mfr. S and H
/// parts are all true-cell; Mfr. M parts alternate per subarray and
/// scramble rows within small blocks.
pub fn base_profile<S: Scalar>(chip: &ChipReference) -> ChipProfile<S> {
    let name = chip.name();
    let seed = name.bytes().fold(0x5EED_u64, |h, b| mix64(h ^ b as u64));
    let rows_per_bank = match chip.die_density {
        Gb8 => 65_536,
        Gb16 => 131_072,
    };
    let (policy, map) = match chip.manufacturer {
        M => (
            EncodingPolicy::InterleavedBySubarray { even_subarrays: CellEncoding::TrueCell },
            RowMap::BlockShuffle { seed: seed ^ 0xB10C, block: 8 },
        ),
        _ => (EncodingPolicy::AllTrue, RowMap::Identity),
    };
    let mut rng = CounterRng::keyed(&[seed, 0x0EAD]);
    let remapped_rows = (0..4).map(|_| rng.below(rows_per_bank as u64) as u32).collect();
    let thresholds = ThresholdSet { falling: ThresholdDist::none(), rising: ThresholdDist::none() };
    let spec = ProfileSpec {
        manufacturer: chip.manufacturer,
        die_density: chip.die_density,
        die_revision: chip.die_revision.to_string(),
        rows_per_bank,
        columns_per_row: COLUMNS_PER_ROW,
        subarray_size: SUBARRAY_SIZE,
        cell_encoding_policy: policy,
        logical_to_physical_map: map,
        remapped_rows,
        mechanism_params: MechanismParams::template(Mode::Empirical, thresholds),
        master_seed: seed,
        calibration: None,
    };
    ChipProfile::new(spec).expect("reference geometry is valid")
}
