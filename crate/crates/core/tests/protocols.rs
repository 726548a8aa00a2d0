mod common;

use common::*;
use readdisturb::disturb::{sample_vulnerabilities, DisturbDirection, Mode};
use readdisturb::model::{ChipProfile, ProfileSpec};
use readdisturb::protocols::{
    resolve_victim, run_experiment, run_experiments, select_rows, Bench, Experiment, ExperimentConfig, HcOutcome,
    SkipReason,
};
use readdisturb::{DataDirection, LogicalRow};

#[test]
fn hc_first_is_smallest_candidate_above_onset() {
    for seed in 0..40 {
        let inst = hc_instance(seed);
        let onset = brute_force_onset(&inst, inst.cfg.sweep_max);
        let got = Bench::new(&inst.profile).run_hc_first(inst.row, inst.direction, &inst.cfg).unwrap();
        assert_eq!(got, expected_hc(&inst.cfg, onset), "seed {seed} onset {onset:?}");
    }
}

/// Total double-sided dose after `k` pairs at 50 °C and tRAS open time,
/// per column parity and frame direction, from the mechanism definitions:
/// the first activation (lower aggressor) is not alternating, every later
/// one is.
fn pair_dose(profile: &ChipProfile<f64>, parity: usize, dir: DisturbDirection, k: u64) -> f64 {
    let p = profile.params();
    let ns = 32.0;
    let kf = k as f64;
    // Even columns: the upper wordline is the NWL; the lower one goes first.
    let nwl_first = parity == 1;
    let (nwl_unboosted, pwl_unboosted) = if nwl_first { (1.0, 0.0) } else { (0.0, 1.0) };
    match dir {
        DisturbDirection::Falling => {
            p.nwl_hammer.strength * (nwl_unboosted + (kf - nwl_unboosted) * p.doubleside_boost)
                + p.pwl_press.strength * ns * kf
        }
        DisturbDirection::Rising => {
            p.pwl_hammer.strength * (pwl_unboosted + (kf - pwl_unboosted) * p.pwl_alternation_boost)
                + p.nwl_press.strength * ns * kf
        }
    }
}

#[test]
fn max_bitflips_match_closed_form_count() {
    for seed in 0..6 {
        let profile = randomized(seed, Mode::Empirical);
        let cfg = ExperimentConfig { sweep_max: 300 + 500 * seed, ..ExperimentConfig::default() };
        let row = select_rows(&profile, 10).into_iter().filter(|r| r.1.is_none()).last().unwrap().0;
        let victim = resolve_victim(&profile, row).unwrap();
        let vuln = sample_vulnerabilities(&profile, victim.physical);
        for d in DataDirection::BOTH {
            let dir = match d {
                DataDirection::OneToZero => DisturbDirection::Falling,
                DataDirection::ZeroToOne => DisturbDirection::Rising,
            };
            let expected: usize = (0..2)
                .map(|parity| {
                    let dose = pair_dose(&profile, parity, dir, cfg.sweep_max);
                    vuln.list(parity, dir).iter().filter(|e| e.threshold <= dose).count()
                })
                .sum();
            let got = Bench::new(&profile).run_max_bitflips(row, d, &cfg).unwrap();
            assert_eq!(got as usize, expected, "seed {seed} {d:?}");
        }
    }
}

#[test]
fn combined_run_equals_separate_runs() {
    let profile = randomized(3, Mode::Empirical);
    let cfg = ExperimentConfig { rows_to_test: 12, sweep_max: 5000, step: 100, rowpress_count: 200, ..ExperimentConfig::default() };
    let (combined, _) = run_experiments(&profile, &cfg, &Experiment::ALL, false).unwrap();
    let mut merged = Vec::new();
    for exp in Experiment::ALL {
        merged.push(run_experiment(&profile, &cfg, exp, false).unwrap().0);
    }
    let merged = readdisturb::protocols::merge_results(merged);
    assert_eq!(combined, merged);
    assert!(combined.iter().any(|r| r.hc_exceeds.is_some()));
}

#[test]
fn row_selection_counts_measured_rows_and_reports_skips() {
    let profile = randomized(11, Mode::Empirical);
    let rows = select_rows(&profile, 100);
    assert_eq!(rows.iter().filter(|r| r.1.is_none()).count(), 100);
    for (row, skip) in &rows {
        let truth = &expected_neighbors(&profile)[row.0 as usize];
        let phys = profile.to_physical(*row).unwrap();
        match skip {
            None => assert_eq!(truth.len(), 2),
            Some(SkipReason::Remapped) => assert!(profile.spec().remapped_rows.contains(&phys.0)),
            Some(_) => assert!(truth.len() < 2),
        }
    }
    // Rows are consecutive from zero.
    assert!(rows.iter().enumerate().all(|(i, r)| r.0 == LogicalRow(i as u32)));
}

#[test]
fn skipped_rows_are_errors_for_single_row_protocols() {
    let mut spec = ProfileSpec::synthetic(128, 64, 64, readdisturb::disturb::MechanismParams::template(Mode::Empirical, thresholds(5.0, 0.5, 0.2)));
    spec.remapped_rows.insert(10);
    let profile = ChipProfile::new(spec).unwrap();
    let cfg = ExperimentConfig::default();
    let mut bench = Bench::new(&profile);
    assert!(bench.run_hc_first(LogicalRow(0), DataDirection::OneToZero, &cfg).is_err());
    assert!(bench.run_hc_first(LogicalRow(9), DataDirection::OneToZero, &cfg).is_err());
    assert!(bench.run_hc_first(LogicalRow(10), DataDirection::OneToZero, &cfg).is_err());
    assert!(matches!(bench.run_hc_first(LogicalRow(20), DataDirection::OneToZero, &cfg).unwrap(), HcOutcome::Found(_)));
}

#[test]
fn results_are_independent_of_thread_count() {
    let profile = randomized(5, Mode::Empirical);
    let cfg = ExperimentConfig { rows_to_test: 24, sweep_max: 3000, step: 50, ..ExperimentConfig::default() };
    let run = |t| readdisturb::protocols::with_threads(t, || run_experiment(&profile, &cfg, Experiment::HcFirst, false).unwrap().0);
    assert_eq!(run(1), run(3));
}

#[test]
fn rowpress_flips_mostly_one_to_zero_in_empirical_mode() {
    let profile = randomized(8, Mode::Empirical).modified(|s| s.mechanism_params.thresholds = thresholds(10.0, 0.8, 0.3)).unwrap();
    let cfg = ExperimentConfig { rows_to_test: 16, ..ExperimentConfig::default() };
    let (rows, _) = run_experiment(&profile, &cfg, Experiment::RowPress, false).unwrap();
    let (mut falling, mut rising) = (0u64, 0u64);
    for r in rows.iter().filter(|r| r.skipped.is_none()) {
        for side in readdisturb::model::Side::BOTH {
            falling += r.rowpress(side, DataDirection::OneToZero).unwrap() as u64;
            rising += r.rowpress(side, DataDirection::ZeroToOne).unwrap() as u64;
        }
    }
    assert!(falling > 0);
    assert!(rising * 1000 <= falling, "{falling} vs {rising}");
}

#[test]
fn single_precision_tracks_double_precision() {
    let profile = randomized(21, Mode::Empirical);
    let single = readdisturb::Profile32::from_json(&profile.to_json()).unwrap();
    let cfg = ExperimentConfig { rows_to_test: 16, sweep_max: 4000, step: 10, ..ExperimentConfig::default() };
    let (a, _) = run_experiment(&profile, &cfg, Experiment::MaxFlips, false).unwrap();
    let (b, _) = run_experiment(&single, &cfg, Experiment::MaxFlips, false).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for d in DataDirection::BOTH {
            let (x, y) = (x.maxflips(d).unwrap_or(0) as i64, y.maxflips(d).unwrap_or(0) as i64);
            assert!((x - y).abs() <= 1 + x / 100, "{x} vs {y}");
        }
    }
}
