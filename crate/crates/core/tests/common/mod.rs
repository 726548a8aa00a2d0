#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use readdisturb::disturb::{MechanismParams, Mode, ThresholdDist, ThresholdSet};
use readdisturb::model::{ChipProfile, EncodingPolicy, ProfileSpec, RowMap};
use readdisturb::rng::CounterRng;

pub fn profiles_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../profiles")
}

pub fn calibrated(name: &str) -> ChipProfile<f64> {
    let path = profiles_dir().join(format!("{name}.json"));
    ChipProfile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn thresholds(mu: f64, sigma: f64, p: f64) -> ThresholdSet<f64> {
    let d = ThresholdDist::new(mu, sigma, p);
    ThresholdSet { falling: d, rising: d }
}

/// Small profile with a shuffled row map, random per-subarray encodings and
/// a few remapped rows.
pub fn randomized(seed: u64, mode: Mode) -> ChipProfile<f64> {
    let mut rng = CounterRng::keyed(&[seed, 0x7E57]);
    let rows = 256 + 64 * rng.below(4) as u32;
    let subarray = [32, 64][rng.below(2) as usize];
    let mut spec = ProfileSpec::synthetic(rows, 128, subarray, MechanismParams::template(mode, thresholds(7.0, 0.8, 0.3)));
    spec.master_seed = seed;
    spec.cell_encoding_policy = EncodingPolicy::RandomPerSubarray { seed: seed ^ 0xC311 };
    spec.logical_to_physical_map = RowMap::BlockShuffle { seed: seed ^ 0x5A5A, block: rows };
    spec.remapped_rows = (0..3).map(|_| rng.below(rows as u64) as u32).collect::<BTreeSet<_>>();
    ChipProfile::new(spec).unwrap()
}

/// Brute-force neighbor sets straight from the physical layout: physical
/// index ±1, same subarray, neither row remapped.
pub fn expected_neighbors(profile: &ChipProfile<f64>) -> Vec<BTreeSet<u32>> {
    let spec = profile.spec();
    let rows = spec.rows_per_bank;
    let phys: Vec<u32> = (0..rows).map(|r| profile.to_physical(readdisturb::LogicalRow(r)).unwrap().0).collect();
    let mut logical_of = vec![0u32; rows as usize];
    for (l, &p) in phys.iter().enumerate() {
        logical_of[p as usize] = l as u32;
    }
    let remapped = &spec.remapped_rows;
    (0..rows)
        .map(|l| {
            let p = phys[l as usize];
            let mut set = BTreeSet::new();
            if remapped.contains(&p) {
                return set;
            }
            for q in [p.wrapping_sub(1), p + 1] {
                if q < rows && q / spec.subarray_size == p / spec.subarray_size && !remapped.contains(&q) {
                    set.insert(logical_of[q as usize]);
                }
            }
            set
        })
        .collect()
}

use readdisturb::engine::{execute, ExecOptions, Opcode, Program, T_RAS, T_RC};
use readdisturb::model::CellArray;
use readdisturb::protocols::{resolve_victim, ExperimentConfig, HcOutcome};
use readdisturb::{DataDirection, LogicalRow, Time};

/// One randomly drawn HC_First instance on a small single-subarray chip.
pub struct HcInstance {
    pub profile: ChipProfile<f64>,
    pub cfg: ExperimentConfig,
    pub row: LogicalRow,
    pub direction: DataDirection,
}

pub fn hc_instance(seed: u64) -> HcInstance {
    let mut rng = CounterRng::keyed(&[seed, 0x4C]);
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.next_f64();
    let mode = if uniform(0.0, 1.0) < 0.5 { Mode::Empirical } else { Mode::Device };
    let set = ThresholdSet {
        falling: ThresholdDist::new(uniform(1.5, 6.5), uniform(0.1, 1.2), uniform(0.02, 0.6)),
        rising: ThresholdDist::new(uniform(1.5, 6.5), uniform(0.1, 1.2), uniform(0.02, 0.6)),
    };
    let columns = 8 * (2 + uniform(0.0, 14.0) as u32);
    let mut spec = ProfileSpec::synthetic(64, columns, 64, MechanismParams::template(mode, set));
    spec.master_seed = seed;
    let profile = ChipProfile::new(spec).unwrap();
    let step = 1 + uniform(0.0, 80.0) as u64;
    let cfg = ExperimentConfig {
        rows_to_test: 1,
        sweep_min: [0, step, 3][uniform(0.0, 3.0) as usize],
        step,
        sweep_max: 1200,
        hammer_temperature: uniform(30.0, 90.0),
        ..ExperimentConfig::default()
    };
    let direction = DataDirection::BOTH[uniform(0.0, 2.0) as usize];
    HcInstance { profile, cfg, row: LogicalRow(1 + uniform(0.0, 62.0) as u32), direction }
}

/// First hammer-pair count at which the victim shows a flip, found by
/// issuing one literal ACT/PRE pair per program.
pub fn brute_force_onset(inst: &HcInstance, limit: u64) -> Option<u64> {
    let v = resolve_victim(&inst.profile, inst.row).unwrap();
    let pattern = inst.direction.victim_pattern();
    let mut array = CellArray::for_profile(&inst.profile);
    array.init_row(v.physical, pattern).unwrap();
    array.init_row(v.lower, !pattern).unwrap();
    array.init_row(v.upper, !pattern).unwrap();
    let mut pair = Program::new();
    pair.push(Time::ZERO, Opcode::Act(v.lower))
        .push(T_RAS, Opcode::Pre)
        .push(T_RC, Opcode::Act(v.upper))
        .push(T_RC + T_RAS, Opcode::Pre);
    let options = ExecOptions { strict_window: false, collect_flips: false };
    for k in 1..=limit {
        execute(&inst.profile, &mut array, &pair, inst.cfg.hammer_temp(), options).unwrap();
        if array.count_mismatches(v.physical, pattern).unwrap() > 0 {
            return Some(k);
        }
    }
    None
}

/// Smallest swept candidate at or above the onset.
pub fn expected_hc(cfg: &ExperimentConfig, onset: Option<u64>) -> HcOutcome {
    match onset.and_then(|k| cfg.candidates().find(|&c| c >= k)) {
        Some(c) => HcOutcome::Found(c),
        None => HcOutcome::NotFound,
    }
}
