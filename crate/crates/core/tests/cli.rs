use std::fs;
use std::path::Path;

use pflock::cli::{run_cli, EXIT_CHECK_FAILED, EXIT_USAGE};
use pflock::io::{read_states_csv, read_trajectory_json, DIAGNOSTICS_CSV, REPORT_JSON, STATES_CSV, TRAJECTORY_JSON};
use pflock::scenarios::SCENARIO_NAMES;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("pflock").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn dir_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn default_checks_pass_for_seed_7() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&[
        "check",
        "--scenario",
        "ex61_random20",
        "--seed",
        "7",
        "--out",
        dir_arg(tmp.path()),
    ]);
    assert_eq!(code, 0, "{out}\n{err}");
    assert!(
        out.lines()
            .any(|l| l.starts_with("PASS") && l.contains("norm_flocking")),
        "{out}"
    );
    let report = fs::read_to_string(tmp.path().join(REPORT_JSON)).unwrap();
    assert!(report.contains("\"satisfied\": true"), "{report}");
}

#[test]
fn failing_check_sets_exit_status() {
    // Ten time units are too few for the speeds to settle.
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&[
        "check",
        "--scenario",
        "ex61_random20",
        "--seed",
        "7",
        "--checks",
        "terminal_limits",
        "--out",
        dir_arg(tmp.path()),
    ]);
    assert_eq!(code, EXIT_CHECK_FAILED, "{out}");
    assert!(
        out.lines()
            .any(|l| l.starts_with("FAIL") && l.contains("terminal_limits")),
        "{out}"
    );
}

#[test]
fn lists_the_eight_presets() {
    let (code, out, _) = run(&["scenario", "list"]);
    assert_eq!(code, 0);
    let names: Vec<&str> = out.lines().collect();
    assert_eq!(names, SCENARIO_NAMES);
    assert_eq!(names.len(), 8);
}

#[test]
fn missing_config_names_the_file() {
    let (code, _, err) = run(&["simulate", "--config", "missing.cfg"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("missing.cfg"), "{err}");
}

#[test]
fn simulate_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (code, _, err) = run(&[
            "simulate",
            "--scenario",
            "ex62_random20",
            "--seed",
            "3",
            "--t-end",
            "2",
            "--format",
            "csv,json",
            "--quiet",
            "--out",
            dir_arg(d.path()),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    for f in [STATES_CSV, DIAGNOSTICS_CSV, TRAJECTORY_JSON] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = read_states_csv(fs::File::open(a.path().join(STATES_CSV)).unwrap()).unwrap();
    let json = read_trajectory_json(fs::File::open(a.path().join(TRAJECTORY_JSON)).unwrap()).unwrap();
    assert_eq!(csv.samples, json.samples);
}

#[test]
fn exported_config_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "simulate",
        "--scenario",
        "ex61_symmetric4",
        "--t-end",
        "1",
        "--quiet",
        "--out",
    ];
    let (code, _, err) = run(&[&args[..], &[dir_arg(a.path())]].concat());
    assert_eq!(code, 0, "{err}");
    let cfg = a.path().join("config.toml");
    let (code, _, err) = run(&[
        "simulate",
        "--config",
        dir_arg(&cfg),
        "--quiet",
        "--out",
        dir_arg(b.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        fs::read(a.path().join(STATES_CSV)).unwrap(),
        fs::read(b.path().join(STATES_CSV)).unwrap()
    );
}

#[test]
fn long_run_speeds_end_near_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "simulate",
        "--scenario",
        "ex61_random20",
        "--seed",
        "0",
        "--t-end",
        "80",
        "--quiet",
        "--out",
        dir_arg(tmp.path()),
    ]);
    assert_eq!(code, 0, "{err}");
    let mut rdr = csv::Reader::from_path(tmp.path().join(DIAGNOSTICS_CSV)).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let last = rdr.records().last().unwrap().unwrap();
    let speeds: Vec<f64> = headers
        .iter()
        .zip(last.iter())
        .filter(|(h, _)| h.starts_with("speed_"))
        .map(|(_, v)| v.parse().unwrap())
        .collect();
    assert_eq!(speeds.len(), 20);
    for s in speeds {
        assert!((s - 2.0).abs() < 1e-3, "speed {s}");
    }
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, err) = run(&[
        "sweep",
        "--scenario",
        "single_agent",
        "--t-end",
        "1",
        "--set",
        "model.a=0.1,0.2",
        "--set",
        "model.b=0.05,0.1,0.2",
        "--out",
        dir_arg(tmp.path()),
    ]);
    assert!(code == 0 || code == EXIT_CHECK_FAILED, "{out}\n{err}");
    let mut dirs: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().into_string().unwrap())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 6);
    assert_eq!(dirs[0], "0000_model.a=0.1_model.b=0.05");
    for d in &dirs {
        assert!(tmp.path().join(d).join(STATES_CSV).exists());
    }
    let index = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(index.lines().count(), 7);
}
