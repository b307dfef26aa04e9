//! Commands behind the `mobsense` binary: protocol validation, study
//! execution with scripted device input, and coverage reporting.

pub mod artifacts;
pub mod coverage;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mobsense_core::clock::{format_iso, parse_iso, MS_PER_HOUR};
use mobsense_core::probes::{parse_battery_csv, parse_location_csv};
use mobsense_core::protocol::ProtocolError;
use mobsense_core::runtime::adaptation_csv;
use mobsense_core::sinks::serialize_data_point;
use mobsense_core::{
    parse_protocol, validate_protocol, EpochMs, MemoryStore, Registries, SharedClock, SimulatedDevice,
    StudyController, StudyProtocol, VirtualClock, WallClock,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::MEMORY_DUMP_FILE;
use crate::coverage::{covered_measures, tally, CoverageReport};

/// Virtual runs start at 2020-01-01T00:00:00Z so their output does not depend
/// on when they were executed.
pub const VIRTUAL_EPOCH_MS: EpochMs = 1_577_836_800_000;

pub const SUMMARY_FILE: &str = "summary.json";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const ADAPTATION_FILE: &str = "adaptation.csv";

/// Parses `24h`, `90m`, `30s` or `250ms` into milliseconds.
pub fn parse_duration(s: &str) -> Result<i64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: i64 = digits
        .parse()
        .map_err(|_| format!("'{s}' does not start with a whole number"))?;
    let scale = match unit {
        "h" => MS_PER_HOUR,
        "m" => 60_000,
        "s" => 1_000,
        "ms" => 1,
        _ => return Err(format!("'{s}' needs a unit of h, m, s or ms")),
    };
    n.checked_mul(scale)
        .filter(|ms| *ms > 0)
        .ok_or_else(|| format!("'{s}' is not a positive duration"))
}

/// Exit status for a failed command: 2 when the protocol could not be
/// parsed, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<ProtocolError>() {
        Some(ProtocolError::Syntax { .. } | ProtocolError::Schema { .. }) => 2,
        _ => 1,
    }
}

fn load_protocol(path: &Path) -> Result<StudyProtocol> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_protocol(&text)?)
}

/// Prints the validation report. Exit 0 when there are no errors, 1 when
/// there are, 2 when the file does not parse.
pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> i32 {
    let protocol = match load_protocol(path) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(out, "error: {e:#}");
            return exit_code(&e);
        }
    };
    let registries = Registries::with_builtin(MemoryStore::new());
    let report = validate_protocol(&protocol, &registries.packages);
    for issue in &report.issues {
        let _ = writeln!(out, "{issue}");
    }
    let errors = report.errors().count();
    let _ = writeln!(
        out,
        "{}: {} error(s), {} warning(s)",
        path.display(),
        errors,
        report.warnings().count()
    );
    i32::from(errors > 0)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub protocol: PathBuf,
    pub duration_ms: i64,
    pub virtual_time: bool,
    pub seed: u64,
    pub battery_profile: Option<PathBuf>,
    pub location_script: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_points: u64,
    pub points_per_hour: f64,
    pub per_type: BTreeMap<String, u64>,
    pub adaptation_transitions: usize,
    pub start_time: String,
    pub duration_ms: i64,
    pub seed: u64,
    pub interrupted: bool,
}

impl RunSummary {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn start_ms(&self) -> Result<EpochMs> {
        parse_iso(&self.start_time).with_context(|| format!("bad start_time '{}'", self.start_time))
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub coverage: CoverageReport,
    /// Runtime's own count of published points, for comparison with the sink.
    pub emitted: u64,
}

fn build_device(opts: &RunOptions, start: EpochMs) -> Result<SimulatedDevice> {
    let mut device = SimulatedDevice::new(opts.seed);
    if let Some(path) = &opts.battery_profile {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let profile = parse_battery_csv(&text, start).with_context(|| format!("in {}", path.display()))?;
        device = device.with_battery_profile(profile)?;
    }
    if let Some(path) = &opts.location_script {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let script = parse_location_csv(&text, start).with_context(|| format!("in {}", path.display()))?;
        device = device.with_location_script(script)?;
    }
    Ok(device)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs the study and writes sink output, `adaptation.csv`, `coverage.csv`
/// and `summary.json` into `opts.out`. Setting `interrupt` ends the run early;
/// whatever was collected so far is still flushed and reported.
pub fn cmd_run(opts: &RunOptions, interrupt: &AtomicBool, out: &mut dyn Write) -> Result<RunOutcome> {
    let protocol = load_protocol(&opts.protocol)?;
    let store = MemoryStore::new();
    let registries = Registries::with_builtin(store.clone());
    let report = validate_protocol(&protocol, &registries.packages);
    if report.has_errors() {
        let issues: Vec<String> = report.errors().map(ToString::to_string).collect();
        bail!("protocol does not validate:\n{}", issues.join("\n"));
    }

    let (clock, chunk_ms): (SharedClock, i64) = if opts.virtual_time {
        (VirtualClock::new(VIRTUAL_EPOCH_MS).shared(), 60_000)
    } else {
        (Arc::new(WallClock), 250)
    };
    let start = clock.now_ms();
    let device = Arc::new(build_device(opts, start)?);
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;

    let mut controller = StudyController::new(protocol.clone(), &registries, clock.clone(), device, &opts.out)?;
    controller.initialize()?;
    controller.start()?;

    let end = start + opts.duration_ms;
    let mut interrupted = false;
    let mut t = start;
    let mut run_result = Ok(());
    while t < end {
        if interrupt.load(Ordering::Relaxed) {
            interrupted = true;
            break;
        }
        t = (t + chunk_ms).min(end);
        run_result = controller.run_until(t);
        if run_result.is_err() {
            break;
        }
    }
    let ran_ms = (clock.now_ms() - start).clamp(0, opts.duration_ms);
    controller.stop()?;
    run_result?;

    if protocol.data_end_point.kind() == "memory" {
        let mut dump = String::new();
        for p in store.points() {
            dump.push_str(&serialize_data_point(&p));
            dump.push('\n');
        }
        write_file(&opts.out, MEMORY_DUMP_FILE, dump.as_bytes())?;
    }

    write_file(&opts.out, ADAPTATION_FILE, adaptation_csv(controller.adaptations(), start).as_bytes())?;

    let measures = covered_measures(&protocol, &registries.packages, &registries.transformers);
    let coverage = CoverageReport::build(&measures, controller.emission_counts(), ran_ms);
    write_file(&opts.out, COVERAGE_FILE, coverage.to_csv().as_bytes())?;

    let mut per_type = BTreeMap::new();
    for ((kind, _), n) in controller.emission_counts() {
        *per_type.entry(kind.clone()).or_insert(0) += n;
    }
    let total_points = controller.published();
    let hours = ran_ms as f64 / MS_PER_HOUR as f64;
    let summary = RunSummary {
        total_points,
        points_per_hour: if hours > 0.0 { total_points as f64 / hours } else { 0.0 },
        per_type,
        adaptation_transitions: controller.adaptations().len(),
        start_time: format_iso(start),
        duration_ms: ran_ms,
        seed: opts.seed,
        interrupted,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_file(&opts.out, SUMMARY_FILE, json.as_bytes())?;

    writeln!(
        out,
        "{} points over {} ms ({:.1}/h), {} tier change(s){}",
        summary.total_points,
        ran_ms,
        summary.points_per_hour,
        summary.adaptation_transitions,
        if interrupted { ", interrupted" } else { "" }
    )?;
    Ok(RunOutcome {
        summary,
        coverage,
        emitted: total_points,
    })
}

/// Recomputes coverage from the sink files in `run_dir`, using only the
/// protocol and `summary.json` for the run's time frame. The CSV is printed
/// to `out`.
pub fn cmd_coverage(run_dir: &Path, protocol_path: &Path, out: &mut dyn Write) -> Result<CoverageReport> {
    let protocol = load_protocol(protocol_path)?;
    let summary = RunSummary::load(run_dir)?;
    let start = summary.start_ms()?;
    let points = artifacts::read_points(run_dir)?;
    let registries = Registries::with_builtin(MemoryStore::new());
    let measures = covered_measures(&protocol, &registries.packages, &registries.transformers);
    let report = CoverageReport::build(&measures, &tally(&points, start), summary.duration_ms);
    out.write_all(report.to_csv().as_bytes())?;
    Ok(report)
}
