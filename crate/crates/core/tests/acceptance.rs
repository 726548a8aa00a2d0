//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use readdisturb::analysis::{check_consistency, table_report, InconsistencyCode, TableKind};
use readdisturb::disturb::Mode;
use readdisturb::engine::{build_hammer_program, execute, EngineError, ExecOptions, Opcode, Program, MAX_OPEN_TIME, T_RAS, T_RC};
use readdisturb::model::{CellArray, Side};
use readdisturb::protocols::{
    reveng_row_mapping, reveng_true_anti, run_experiments, Bench, Experiment, ExperimentConfig, RowResult,
};
use readdisturb::reference::{CHIPS, TABLE2_GEOMEAN_PCT, TABLE3_GEOMEAN_PCT, TABLE4_GEOMEAN_PCT};
use readdisturb::{DataDirection, LogicalRow, PhysicalRow, Profile64, Time};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

struct ChipRun {
    name: String,
    profile: Profile64,
    results: Vec<RowResult>,
}

fn measure_all() -> Vec<ChipRun> {
    let cfg = ExperimentConfig::default();
    CHIPS
        .iter()
        .map(|chip| {
            let start = Instant::now();
            let profile = calibrated(&chip.name());
            let (results, _) = run_experiments(&profile, &cfg, &Experiment::ALL, false).unwrap();
            eprintln!("  measured {} ({} rows) in {:.0?}", chip.name(), results.len(), start.elapsed());
            ChipRun { name: chip.name(), profile, results }
        })
        .collect()
}

fn table_criterion(runs: &[ChipRun], kind: TableKind, tolerance: f64, geomean: f64, band: f64) -> Outcome {
    let chips: Vec<(String, Vec<RowResult>)> = runs.iter().map(|r| (r.name.clone(), r.results.clone())).collect();
    let report = table_report(kind, &chips);
    let mut worst = (0.0, String::new());
    let mut ok = true;
    for (row, chip) in report.chips.iter().zip(CHIPS.iter()) {
        let targets = match kind {
            TableKind::HcFirst => [chip.hc_first[0], chip.hc_first[1]],
            TableKind::MaxFlips => [chip.maxflips[0], chip.maxflips[1]],
            TableKind::HcExceeds => [chip.hc_first[0], chip.hc_exceeds],
        };
        for (got, target) in [row.mean_a, row.mean_b].into_iter().zip(targets) {
            let e = got.map(|g| rel(g, target)).unwrap_or(f64::INFINITY);
            ok &= e <= tolerance;
            if e > worst.0 {
                worst = (e, row.chip.clone());
            }
        }
    }
    let g = report.geomean_pct.unwrap_or(f64::NAN);
    ok &= (g - geomean).abs() <= band;
    outcome(
        ok,
        format!("worst per-chip error {:.2}% ({}), geomean {:.1}% (target {geomean}% ± {band})", 100.0 * worst.0, worst.1, g),
    )
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion4(runs: &[ChipRun]) -> Outcome {
    let mut bad = Vec::new();
    for run in runs {
        let rows: Vec<&RowResult> = run.results.iter().filter(|r| r.skipped.is_none()).collect();
        let hc = |d: DataDirection| mean_of(rows.iter().filter_map(|r| r.hc_first(d)?.found()).map(|v| v as f64));
        let mf = |d: DataDirection| mean_of(rows.iter().filter_map(|r| r.maxflips(d)).map(|v| v as f64));
        let hc_ok = hc(DataDirection::ZeroToOne) <= hc(DataDirection::OneToZero);
        let mf_ok = mf(DataDirection::OneToZero) > mf(DataDirection::ZeroToOne);
        if !(hc_ok && mf_ok) {
            bad.push(run.name.clone());
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "all 12 profiles ordered".into() } else { format!("violations: {bad:?}") })
}

fn criterion5(runs: &[ChipRun]) -> Outcome {
    let (mut r10, mut total) = (0u64, 0u64);
    let mut worst_side = (0.0, String::new());
    for run in runs {
        let rows: Vec<&RowResult> = run.results.iter().filter(|r| r.skipped.is_none()).collect();
        let side_mean = |side: Side| {
            mean_of(rows.iter().map(|r| DataDirection::BOTH.iter().map(|&d| r.rowpress(side, d).unwrap() as f64).sum::<f64>()))
        };
        for r in &rows {
            for side in Side::BOTH {
                r10 += r.rowpress(side, DataDirection::OneToZero).unwrap() as u64;
                total += (r.rowpress(side, DataDirection::OneToZero).unwrap() + r.rowpress(side, DataDirection::ZeroToOne).unwrap()) as u64;
            }
        }
        let (u, l) = (side_mean(Side::Upper), side_mean(Side::Lower));
        let d = (u - l).abs() / u.min(l);
        if d > worst_side.0 {
            worst_side = (d, run.name.clone());
        }
    }
    let share = r10 as f64 / total as f64;
    outcome(
        share >= 0.999 && worst_side.0 <= 0.10,
        format!(
            "1→0 share {:.4}% of {total} flips, largest upper/lower difference {:.2}% ({})",
            100.0 * share,
            100.0 * worst_side.0,
            worst_side.1
        ),
    )
}

fn criterion6(runs: &[ChipRun]) -> Outcome {
    let all: BTreeSet<InconsistencyCode> = [InconsistencyCode::Inc1, InconsistencyCode::Inc2, InconsistencyCode::Inc3].into();
    let mut empirical = BTreeSet::new();
    for run in runs {
        empirical.extend(check_consistency(&run.profile, &run.results, Mode::Device).codes());
    }
    let cfg = ExperimentConfig { rows_to_test: 256, ..ExperimentConfig::default() };
    let exps = [Experiment::HcFirst, Experiment::MaxFlips, Experiment::RowPress];
    let mut device = BTreeSet::new();
    for run in runs {
        let profile = run.profile.with_mode(Mode::Device);
        let (results, _) = run_experiments(&profile, &cfg, &exps, false).unwrap();
        device.extend(check_consistency(&profile, &results, Mode::Device).codes());
    }
    outcome(
        empirical == all && device.is_empty(),
        format!("empirical vs device predictions: {empirical:?}; device vs device: {device:?}"),
    )
}

fn criterion7() -> Outcome {
    let (mut rows_ok, mut rows_total, mut subs_ok, mut subs_total) = (0, 0, 0, 0);
    let cfg = ExperimentConfig::default();
    for seed in 0..20 {
        let profile = randomized(1000 + seed, if seed % 2 == 0 { Mode::Empirical } else { Mode::Device });
        let rows: Vec<LogicalRow> = (0..profile.rows()).map(LogicalRow).collect();
        let map = reveng_row_mapping(&profile, &rows, &cfg, false).unwrap();
        for (l, truth) in expected_neighbors(&profile).into_iter().enumerate() {
            let got: BTreeSet<u32> = map.neighbors.get(&LogicalRow(l as u32)).map(|v| v.iter().map(|r| r.0).collect()).unwrap_or_default();
            rows_total += 1;
            rows_ok += (got == truth) as u32;
        }
        let cells = reveng_true_anti(&profile, &cfg).unwrap();
        for s in &cells.subarrays {
            let truth = profile.encoding_of(PhysicalRow(s.subarray * profile.spec().subarray_size)).unwrap();
            subs_total += 1;
            subs_ok += (s.encoding == Some(truth)) as u32;
        }
    }
    outcome(
        rows_ok == rows_total && subs_ok == subs_total,
        format!("20 profiles: rows {rows_ok}/{rows_total}, subarrays {subs_ok}/{subs_total}"),
    )
}

fn criterion8() -> Outcome {
    let mut ok = 0;
    let mut found = 0;
    for seed in 0..100 {
        let inst = hc_instance(5000 + seed);
        let onset = brute_force_onset(&inst, inst.cfg.sweep_max);
        let got = Bench::new(&inst.profile).run_hc_first(inst.row, inst.direction, &inst.cfg).unwrap();
        ok += (got == expected_hc(&inst.cfg, onset)) as u32;
        found += got.found().is_some() as u32;
    }
    outcome(ok == 100, format!("{ok}/100 instances match ({found} with a flip)"))
}

fn criterion9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let profile = common::profiles_dir().join("H-8Gb-D.json");
    let mut mismatched = Vec::new();
    let exps = ["hcfirst", "maxflips", "hcexceeds", "rowpress", "retention", "reveng-map", "reveng-cells"];
    for exp in exps {
        let mut files = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("t{threads}"));
            let o = Command::new(env!("CARGO_BIN_EXE_readdisturb"))
                .args([exp, "--profile", profile.to_str().unwrap(), "--rows", "32", "--threads", threads, "--seed", "7"])
                .args(["--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(o.status.success(), "{exp}: {}", String::from_utf8_lossy(&o.stderr));
            files.push(fs::read(String::from_utf8(o.stdout).unwrap().trim()).unwrap());
        }
        if files[0] != files[1] {
            mismatched.push(exp);
        }
    }
    outcome(mismatched.is_empty(), format!("{} artifacts compared at 1 and 4 threads; differing: {mismatched:?}", exps.len()))
}

fn criterion10() -> Outcome {
    let profile = randomized(1, Mode::Empirical);
    let (a, b) = (PhysicalRow(10), PhysicalRow(12));
    let options = ExecOptions { strict_window: false, collect_flips: false };

    let mut array = CellArray::for_profile(&profile);
    let program = build_hammer_program(&[a, b], 500_000, T_RAS).unwrap();
    let trace = execute(&profile, &mut array, &program, 50.0, options);
    let (accepted, warned, span) = match &trace {
        Ok(t) => (true, !t.warnings.is_empty(), t.span),
        Err(_) => (false, false, Time::ZERO),
    };

    let too_long = MAX_OPEN_TIME + Time::from_ns(1);
    let mut press = Program::new();
    press.push(Time::ZERO, Opcode::Act(a)).push(too_long, Opcode::Pre);
    let long_rejected = matches!(
        execute(&profile, &mut CellArray::for_profile(&profile), &press, 50.0, options),
        Err(EngineError::TimingViolation { .. } | EngineError::OpenTimeOutOfBounds { .. })
    ) && matches!(build_hammer_program(&[a], 1, too_long), Err(EngineError::OpenTimeOutOfBounds { .. }));

    let mut double = Program::new();
    double.push(Time::ZERO, Opcode::Act(a)).push(T_RC, Opcode::Act(b));
    let act_rejected = matches!(
        execute(&profile, &mut CellArray::for_profile(&profile), &double, 50.0, options),
        Err(EngineError::IllegalCommand { .. })
    );
    outcome(
        accepted && warned && long_rejected && act_rejected,
        format!(
            "500K program accepted: {accepted}, window warning: {warned} (span {:.3} ms), 7.8 µs + 1 ns rejected: {long_rejected}, ACT on open bank rejected: {act_rejected}",
            span.as_ns_f64() / 1e6
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    eprintln!("measuring 12 calibrated profiles (2048 rows each)...");
    let runs = measure_all();
    let results: Vec<(u8, &str, Outcome)> = vec![
        (1, "Table 2 HC_First", table_criterion(&runs, TableKind::HcFirst, 0.10, TABLE2_GEOMEAN_PCT, 3.0)),
        (2, "Table 3 bitflips", table_criterion(&runs, TableKind::MaxFlips, 0.10, TABLE3_GEOMEAN_PCT, 10.0)),
        (3, "Table 4 1→0 exceeds 0→1", table_criterion(&runs, TableKind::HcExceeds, 0.15, TABLE4_GEOMEAN_PCT, 30.0)),
        (4, "observation ordering", criterion4(&runs)),
        (5, "RowPress direction skew", criterion5(&runs)),
        (6, "consistency checker", criterion6(&runs)),
        (7, "reverse-engineering oracles", criterion7()),
        (8, "HC_First oracle", criterion8()),
        (9, "thread-count determinism", criterion9()),
        (10, "timing engine", criterion10()),
    ];
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as u32;
    }
    println!("acceptance: {} passed, {failed} failed in {:.0?}", results.len() as u32 - failed, start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
