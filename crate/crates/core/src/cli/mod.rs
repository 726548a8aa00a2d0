//! Command-line front end: profile loading, run orchestration and result
//! persistence.

mod calibrate;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{check_consistency, plot_csv, table_report, TableKind};
use crate::disturb::Mode;
use crate::model::{ChipProfile, LogicalRow, ModelError};
use crate::protocols::{
    merge_results, read_results, reveng_row_mapping, reveng_true_anti, run_experiment, run_retention_rows,
    with_threads, write_results, Experiment, ExperimentConfig, ProtocolError, ResultsError, RowResult,
};
use crate::reference;
use crate::{Scalar, TOOL_VERSION};

pub use calibrate::{calibrate, CalibrationError, CalibrationOptions, CalibrationRecord, METRICS};

#[derive(Debug, Parser)]
#[command(name = "readdisturb", version, about = "Simulated DRAM read-disturbance characterization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest swept hammer count producing a flip, per direction.
    Hcfirst(RunArgs),
    /// Flip counts at the largest hammer count, per direction.
    Maxflips(RunArgs),
    /// Smallest hammer count where 1→0 flips outnumber 0→1 flips.
    Hcexceeds(RunArgs),
    /// Single-sided long-open-time flips per side and direction.
    Rowpress(RunArgs),
    /// Retention failures under all-ones and all-zeros.
    Retention(RunArgs),
    /// Logical-to-physical row adjacency by single-sided hammering.
    RevengMap(RunArgs),
    /// True-/anti-cell layout per subarray from retention failures.
    RevengCells(RunArgs),
    /// Fits threshold populations to target means.
    Calibrate(CalibrateArgs),
    /// Summary table over a results directory.
    Report(ReportArgs),
    /// Compares measured characteristics with mechanism predictions.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Device,
    Empirical,
}

impl ModeArg {
    pub fn label(self) -> &'static str {
        match self {
            ModeArg::Device => "device",
            ModeArg::Empirical => "empirical",
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Device => Mode::Device,
            ModeArg::Empirical => Mode::Empirical,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Chip profile JSON.
    #[arg(long)]
    pub profile: PathBuf,
    /// Number of logical rows to test.
    #[arg(long)]
    pub rows: Option<u32>,
    /// Replaces the profile's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Temperature (°C) for every experiment step.
    #[arg(long)]
    pub temp: Option<f64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Treat refresh-window overruns as errors.
    #[arg(long)]
    pub strict_timing: bool,
    /// Results root directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run the profile's thresholds under another mechanism mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// JSON file with experiment configuration overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Clone, Debug, Args)]
pub struct CalibrateArgs {
    /// Reference chip to start from (e.g. S-8Gb-B).
    #[arg(long, conflicts_with = "profile")]
    pub chip: Option<String>,
    /// Existing profile to refit.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Five comma-separated targets: HC_First 0→1, 1→0, bitflips 0→1,
    /// 1→0, 1→0-exceeds-0→1. Defaults to the chip's reference values.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<f64>>,
    #[arg(long, default_value_t = 128)]
    pub sample_rows: u32,
    #[arg(long, default_value_t = 60)]
    pub max_passes: u32,
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output profile path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    /// Table number: 2 (HC_First), 3 (bitflips) or 4 (1→0 exceeds 0→1).
    #[arg(long)]
    pub table: u8,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Also write per-row box-plot data as CSV.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Mechanism whose predictions the results are compared against.
    #[arg(long, value_enum, default_value_t = ModeArg::Device)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Protocol(e) if e.is_timing() => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Everything that determines a run's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub profile: PathBuf,
    pub profile_name: String,
    pub profile_sha256: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub mode: ModeArg,
    pub precision: Precision,
    pub out: PathBuf,
    /// Scheduling only; artifacts are identical for every value.
    #[serde(skip)]
    pub threads: usize,
    pub strict_timing: bool,
    pub tool_version: String,
}

impl RunManifest {
    pub fn result_dir(&self) -> PathBuf {
        self.out.join(&self.profile_name)
    }

    /// Header line embedded in every artifact.
    pub fn comment(&self) -> String {
        format!(
            "readdisturb {} profile={} profile_sha256={} seed={} experiment={} mode={}",
            self.tool_version,
            self.profile_name,
            self.profile_sha256,
            self.seed,
            self.experiment,
            self.mode.label()
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn prepare<S: Scalar>(args: &RunArgs, experiment: &str) -> Result<(ChipProfile<S>, RunManifest), CliError> {
    let mut profile: ChipProfile<S> = ChipProfile::from_json(&read_file(&args.profile)?)?;
    if let Some(seed) = args.seed {
        profile = profile.with_seed(seed);
    }
    if let Some(mode) = args.mode {
        profile = profile.with_mode(mode.into());
    }
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_file(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(rows) = args.rows {
        config.rows_to_test = rows;
    }
    if args.temp.is_some() {
        config.temperature = args.temp;
    }
    config.validate()?;
    let mode = match profile.params().mode {
        Mode::Device => ModeArg::Device,
        Mode::Empirical => ModeArg::Empirical,
    };
    let manifest = RunManifest {
        profile: args.profile.clone(),
        profile_name: profile.name(),
        profile_sha256: sha256_hex(profile.to_json().as_bytes()),
        experiment: experiment.to_string(),
        config,
        seed: profile.seed(),
        mode,
        precision: args.precision,
        out: args.out.clone(),
        threads: args.threads,
        strict_timing: args.strict_timing,
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok((profile, manifest))
}

/// Writes the effective profile and records the manifest under its
/// experiment name in the directory's `manifest.json`.
fn persist_run<S: Scalar>(profile: &ChipProfile<S>, manifest: &RunManifest) -> Result<(), CliError> {
    let dir = manifest.result_dir();
    write_file(&dir.join("profile.json"), profile.to_json().as_bytes())?;
    let path = dir.join("manifest.json");
    let mut all: BTreeMap<String, RunManifest> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    all.insert(manifest.experiment.clone(), manifest.clone());
    write_file(&path, serde_json::to_string_pretty(&all)?.as_bytes())
}

#[derive(Serialize)]
struct JsonArtifact<'a, T> {
    comment: String,
    tool_version: &'a str,
    profile_sha256: &'a str,
    seed: u64,
    report: T,
}

fn json_artifact<T: Serialize>(manifest: &RunManifest, report: T) -> Result<Vec<u8>, CliError> {
    let a = JsonArtifact {
        comment: manifest.comment(),
        tool_version: &manifest.tool_version,
        profile_sha256: &manifest.profile_sha256,
        seed: manifest.seed,
        report,
    };
    let mut s = serde_json::to_string_pretty(&a)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

/// Runs one measurement subcommand; returns the artifact path.
pub fn run_measurement<S: Scalar>(args: &RunArgs, name: &str) -> Result<PathBuf, CliError> {
    let (profile, manifest) = prepare::<S>(args, name)?;
    let cfg = &manifest.config;
    let dir = manifest.result_dir();
    let experiment = Experiment::ALL.into_iter().find(|e| e.name() == name);
    let (file, bytes) = with_threads(args.threads, || -> Result<(String, Vec<u8>), CliError> {
        if let Some(exp) = experiment {
            let (rows, warnings) = run_experiment(&profile, cfg, exp, args.strict_timing)?;
            warn_all(&warnings);
            let mut buf = Vec::new();
            write_results(&mut buf, &manifest.comment(), &rows)?;
            return Ok((format!("{name}.csv"), buf));
        }
        match name {
            "retention" => {
                let rows = run_retention_rows(&profile, cfg)?;
                let mut buf = Vec::new();
                writeln!(buf, "# {}", manifest.comment()).expect("vec write");
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["row", "physical_row", "flips_ones", "flips_zeros", "encoding"])
                    .map_err(ResultsError::from)?;
                for (row, r) in rows {
                    let enc = r.encoding().map(|e| e.label()).unwrap_or("");
                    w.write_record([row.0.to_string(), r.row.0.to_string(), r.flips_ones.to_string(), r.flips_zeros.to_string(), enc.to_string()])
                        .map_err(ResultsError::from)?;
                }
                w.flush().map_err(|e| CliError::Io { path: dir.clone(), source: e })?;
                drop(w);
                Ok(("retention.csv".into(), buf))
            }
            "reveng-map" => {
                let rows: Vec<LogicalRow> = (0..cfg.rows_to_test.min(profile.rows())).map(LogicalRow).collect();
                let report = reveng_row_mapping(&profile, &rows, cfg, args.strict_timing)?;
                Ok(("reveng-map.json".into(), json_artifact(&manifest, &report)?))
            }
            "reveng-cells" => {
                let report = reveng_true_anti(&profile, cfg)?;
                Ok(("reveng-cells.json".into(), json_artifact(&manifest, &report)?))
            }
            other => Err(CliError::Invalid(format!("unknown experiment {other}"))),
        }
    })?;
    let path = dir.join(file);
    write_file(&path, &bytes)?;
    persist_run(&profile, &manifest)?;
    Ok(path)
}

/// Per-profile result sets found under `root`: either `root` itself or its
/// immediate subdirectories, each holding `profile.json` and CSVs.
pub fn load_results_dir(root: &Path) -> Result<Vec<(PathBuf, Vec<RowResult>)>, CliError> {
    let mut dirs = Vec::new();
    if root.join("profile.json").is_file() {
        dirs.push(root.to_path_buf());
    } else {
        let entries = fs::read_dir(root).map_err(io_err(root))?;
        for e in entries {
            let p = e.map_err(io_err(root))?.path();
            if p.join("profile.json").is_file() {
                dirs.push(p);
            }
        }
        dirs.sort();
    }
    if dirs.is_empty() {
        return Err(CliError::Invalid(format!("no results found under {}", root.display())));
    }
    let mut out = Vec::new();
    for dir in dirs {
        let mut sets = Vec::new();
        for exp in Experiment::ALL {
            let path = dir.join(format!("{}.csv", exp.name()));
            if path.is_file() {
                let f = fs::File::open(&path).map_err(io_err(&path))?;
                sets.push(read_results(f)?);
            }
        }
        out.push((dir, merge_results(sets)));
    }
    Ok(out)
}

fn profile_in(dir: &Path) -> Result<ChipProfile<f64>, CliError> {
    Ok(ChipProfile::from_json(&read_file(&dir.join("profile.json"))?)?)
}

pub fn run_report(args: &ReportArgs) -> Result<String, CliError> {
    let kind = TableKind::from_number(args.table).ok_or_else(|| CliError::Invalid(format!("no table {}", args.table)))?;
    let mut chips = Vec::new();
    for (dir, rows) in load_results_dir(&args.results)? {
        chips.push((profile_in(&dir)?.name(), rows));
    }
    let report = table_report(kind, &chips);
    if let Some(path) = &args.plot_data {
        write_file(path, plot_csv(&chips).as_bytes())?;
    }
    Ok(match args.format {
        Format::Text => report.render_text(),
        Format::Json => report.to_json(),
    })
}

pub fn run_check(args: &CheckArgs) -> Result<String, CliError> {
    let mut text = String::new();
    let mut json = BTreeMap::new();
    let mut codes = std::collections::BTreeSet::new();
    for (dir, rows) in load_results_dir(&args.results)? {
        let profile = profile_in(&dir)?;
        let report = check_consistency(&profile, &rows, args.mode.into());
        codes.extend(report.codes());
        text.push_str(&format!("== {} ==\n{}\n", profile.name(), report.render_text()));
        json.insert(profile.name(), report);
    }
    let list: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
    Ok(match args.format {
        Format::Text => {
            text.push_str(&format!("inconsistencies: {}\n", if list.is_empty() { "none".to_string() } else { list.join(", ") }));
            text
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&serde_json::json!({ "chips": json, "inconsistencies": list }))?;
            s.push('\n');
            s
        }
    })
}

pub fn run_calibrate(args: &CalibrateArgs) -> Result<CalibrationRecord, CliError> {
    let (profile, default_targets) = match (&args.chip, &args.profile) {
        (Some(name), None) => {
            let chip = reference::find(name).ok_or_else(|| CliError::Invalid(format!("unknown chip {name}")))?;
            (reference::base_profile::<f64>(chip), Some(chip.targets()))
        }
        (None, Some(path)) => {
            let p: ChipProfile<f64> = ChipProfile::from_json(&read_file(path)?)?;
            let t = reference::find(&p.name()).map(|c| c.targets());
            (p, t)
        }
        _ => return Err(CliError::Invalid("exactly one of --chip or --profile is required".into())),
    };
    let targets = match &args.targets {
        Some(t) => <[f64; 5]>::try_from(t.as_slice()).map_err(|_| CliError::Invalid("--targets takes five values".into()))?,
        None => default_targets.ok_or_else(|| CliError::Invalid("no reference targets for this profile; pass --targets".into()))?,
    };
    let options = CalibrationOptions {
        sample_rows: args.sample_rows,
        max_passes: args.max_passes,
        tolerance: args.tolerance,
        ..CalibrationOptions::default()
    };
    let (fitted, record) = with_threads(args.threads, || calibrate(&profile, targets, &options))?;
    let mut json = fitted.to_json();
    json.push('\n');
    write_file(&args.out, json.as_bytes())?;
    Ok(record)
}

fn dispatch<S: Scalar>(args: &RunArgs, name: &str) -> Result<PathBuf, CliError> {
    run_measurement::<S>(args, name)
}

/// Executes a parsed command line, printing its primary output.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let measure = |args: &RunArgs, name: &str| -> Result<(), CliError> {
        let path = match args.precision {
            Precision::F64 => dispatch::<f64>(args, name)?,
            Precision::F32 => dispatch::<f32>(args, name)?,
        };
        println!("{}", path.display());
        Ok(())
    };
    match &cli.command {
        Command::Hcfirst(a) => measure(a, "hcfirst"),
        Command::Maxflips(a) => measure(a, "maxflips"),
        Command::Hcexceeds(a) => measure(a, "hcexceeds"),
        Command::Rowpress(a) => measure(a, "rowpress"),
        Command::Retention(a) => measure(a, "retention"),
        Command::RevengMap(a) => measure(a, "reveng-map"),
        Command::RevengCells(a) => measure(a, "reveng-cells"),
        Command::Calibrate(a) => {
            let r = run_calibrate(a)?;
            for (i, m) in METRICS.iter().enumerate() {
                println!("{m}: target {:.1} achieved {:.1} error {:.2}%", r.targets[i], r.achieved[i], 100.0 * r.relative_errors[i]);
            }
            println!("{}", a.out.display());
            Ok(())
        }
        Command::Report(a) => {
            print!("{}", run_report(a)?);
            Ok(())
        }
        Command::Check(a) => {
            print!("{}", run_check(a)?);
            Ok(())
        }
    }
}
