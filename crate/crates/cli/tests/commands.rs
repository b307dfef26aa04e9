use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use mobsense_cli::coverage::CoverageReport;
use mobsense_cli::{cmd_coverage, cmd_run, RunOptions, RunSummary, COVERAGE_FILE, SUMMARY_FILE, VIRTUAL_EPOCH_MS};
use mobsense_core::clock::format_iso;
use mobsense_core::sinks::DataEndPoint;
use mobsense_core::{
    serialize_protocol, FormatKey, Measure, MemoryStore, Registries, SimulatedDevice, StudyController,
    StudyProtocol, Task, Trigger, VirtualClock,
};

fn mobsense(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mobsense")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn light_protocol(endpoint: DataEndPoint) -> StudyProtocol {
    StudyProtocol::new("s", "u", endpoint).add_trigger_task(
        Trigger::immediate(),
        Task::new(
            "t",
            vec![
                Measure::new(FormatKey::carp("light")).with_frequency(1_000),
                Measure::new(FormatKey::carp("geofence")),
            ],
        ),
    )
}

fn write_protocol(dir: &Path, p: &StudyProtocol) -> String {
    let path = dir.join("protocol.json");
    fs::write(&path, serialize_protocol(p)).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_protocol(dir.path(), &light_protocol(DataEndPoint::Memory));
    let (code, stdout, _) = mobsense(&["validate", &good]);
    assert_eq!(code, 0, "{stdout}");

    let unknown = serialize_protocol(&light_protocol(DataEndPoint::Memory)).replace("carp.light", "carp.lidar");
    let path = dir.path().join("unknown.json");
    fs::write(&path, unknown).unwrap();
    let (code, stdout, _) = mobsense(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.contains("$.trigger_tasks[0].task.measures[0].type"), "{stdout}");

    let path = dir.path().join("broken.json");
    fs::write(&path, "{\"id\": ").unwrap();
    let (code, _, _) = mobsense(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn run_then_recompute_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = write_protocol(dir.path(), &light_protocol(DataEndPoint::file(100_000, true)));
    let out = dir.path().join("run");
    let (code, _, stderr) = mobsense(&[
        "run", &protocol, "--duration", "90m", "--seed", "3", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");

    let summary = RunSummary::load(&out).unwrap();
    assert_eq!(summary.duration_ms, 90 * 60_000);
    assert_eq!(summary.per_type["carp.light"], 5_400);

    let written = CoverageReport::from_csv(&fs::read_to_string(out.join(COVERAGE_FILE)).unwrap()).unwrap();
    let (code, stdout, stderr) = mobsense(&["coverage", out.to_str().unwrap(), &protocol]);
    assert_eq!(code, 0, "{stderr}");
    let recomputed = CoverageReport::from_csv(&stdout).unwrap();
    assert_eq!(written, recomputed);
    // The geofence measure is event driven and has no expectation.
    assert!(recomputed.cells.iter().all(|c| c.measure == "carp.light"));
    assert_eq!(recomputed.cells.len(), 2);
    assert_eq!((recomputed.cells[1].expected, recomputed.cells[1].collected), (1_800, 1_800));
    let counted: u64 = summary.per_type.values().sum();
    assert_eq!(summary.total_points, counted);
}

#[test]
fn run_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, _, _) = mobsense(&["run", "/nonexistent.json", "--duration", "1h", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    let encrypted = light_protocol(DataEndPoint::File {
        buffer_size: 4096,
        zip: false,
        encrypt: true,
    });
    let protocol = write_protocol(dir.path(), &encrypted);
    let (code, _, stderr) = mobsense(&["run", &protocol, "--duration", "1h", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stderr.contains("encrypt"), "{stderr}");
    let (code, _, _) = mobsense(&["run", &protocol, "--duration", "1d", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "clap rejects the duration");
}

#[test]
fn coverage_of_a_run_with_a_pause() {
    let dir = tempfile::tempdir().unwrap();
    let p = light_protocol(DataEndPoint::file(1_000_000, false));
    let protocol = write_protocol(dir.path(), &p);
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();

    let clock = VirtualClock::new(VIRTUAL_EPOCH_MS);
    let registries = Registries::with_builtin(MemoryStore::new());
    let mut c = StudyController::new(p, &registries, clock.shared(), Arc::new(SimulatedDevice::new(1)), &out).unwrap();
    c.initialize().unwrap();
    c.start().unwrap();
    c.run_for(20 * 60_000).unwrap();
    c.pause().unwrap();
    c.run_for(10 * 60_000).unwrap();
    c.resume().unwrap();
    c.run_for(30 * 60_000).unwrap();
    c.stop().unwrap();
    let summary = RunSummary {
        total_points: c.published(),
        points_per_hour: c.published() as f64,
        per_type: Default::default(),
        adaptation_transitions: 0,
        start_time: format_iso(VIRTUAL_EPOCH_MS),
        duration_ms: 3_600_000,
        seed: 1,
        interrupted: false,
    };
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string(&summary).unwrap()).unwrap();

    let report = cmd_coverage(&out, Path::new(&protocol), &mut std::io::sink()).unwrap();
    let cell = report.cell("carp.light", 0).unwrap();
    assert_eq!((cell.expected, cell.collected), (3_600, 3_000));
    assert!((cell.coverage - 5.0 / 6.0).abs() < 1e-9);
}

#[test]
fn interrupted_run_still_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = write_protocol(dir.path(), &light_protocol(DataEndPoint::Memory));
    let opts = RunOptions {
        protocol: protocol.into(),
        duration_ms: 3_600_000,
        virtual_time: true,
        seed: 0,
        battery_profile: None,
        location_script: None,
        out: dir.path().join("run"),
    };
    let outcome = cmd_run(&opts, &AtomicBool::new(true), &mut std::io::sink()).unwrap();
    assert!(outcome.summary.interrupted);
    assert_eq!(outcome.summary.total_points, 0);
    for f in [SUMMARY_FILE, COVERAGE_FILE, "adaptation.csv", "memory.ndjson"] {
        assert!(opts.out.join(f).is_file(), "{f} missing");
    }
}
