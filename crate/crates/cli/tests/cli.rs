//! Black-box tests of the `gridshed` binary: output contracts and exit
//! codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn gridshed(out_root: &std::path::Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshed"))
        .args(args)
        .env("GRIDSHED_OUT", out_root)
        .output()
        .expect("binary should spawn")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

#[test]
fn run_prints_the_frozen_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(
        dir.path(),
        &["run", scenario("motor.scenario").to_str().unwrap()],
    );
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(
        stdout(&output),
        "motor: 0 UFLS events, 0.050 MWh served, max |df| 0.000 Hz\n"
    );
    for name in ["timeseries.csv", "events.json", "summary.json"] {
        assert!(dir.path().join("motor").join(name).is_file(), "{name}");
    }
}

#[test]
fn invalid_override_exits_one_and_cites_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(
        dir.path(),
        &[
            "run",
            scenario("case1.scenario").to_str().unwrap(),
            "--set",
            "ufls.tau1_max_s=700",
        ],
    );
    assert_eq!(output.status.code(), Some(1));
    let err = stderr(&output);
    assert!(err.contains("stability bound"), "{err}");
    assert!(err.contains("59.792"), "{err}");
}

#[test]
fn missing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(dir.path(), &["run", "no/such/file.scenario"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("cannot read"), "{}", stderr(&output));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, b"a file, not a directory").unwrap();
    let output = gridshed(
        dir.path(),
        &[
            "run",
            scenario("motor.scenario").to_str().unwrap(),
            "--out",
            blocker.join("nested").to_str().unwrap(),
        ],
    );
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
}

#[test]
fn usage_errors_exit_one_but_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(dir.path(), &["frobnicate"]);
    assert_eq!(output.status.code(), Some(1));
    let output = gridshed(dir.path(), &["--help"]);
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("sweep"));
}

#[test]
fn validate_reports_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(
        dir.path(),
        &["validate", scenario("case2.scenario").to_str().unwrap()],
    );
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.starts_with("ok: case2 (5 groups, 110 devices"), "{text}");
    assert!(text.contains("topology fingerprint"), "{text}");
}

#[test]
fn sweep_is_job_count_invariant_and_orders_rows() {
    let dir = tempfile::tempdir().unwrap();
    let case1 = scenario("case1.scenario");
    let mut csvs = Vec::new();
    for (jobs, name) in [("1", "a.csv"), ("4", "b.csv")] {
        let out = dir.path().join(name);
        let output = gridshed(
            dir.path(),
            &[
                "sweep",
                case1.to_str().unwrap(),
                "--set",
                "sim.horizon_s=2000",
                "--axis",
                "ufls.tau2_s=300,900",
                "--jobs",
                jobs,
                "--out",
                out.to_str().unwrap(),
            ],
        );
        assert!(output.status.success(), "{}", stderr(&output));
        csvs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "worker count changed the sweep bytes");

    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].starts_with("index,seed,ufls.tau2_s,ufls_events"));
    assert_eq!(rows.len(), 3);
    let events_of = |line: &str| -> usize {
        line.split(',').nth(3).unwrap().parse().unwrap()
    };
    // Faster reclosure means the overload comes back more often.
    assert!(
        events_of(rows[1]) > events_of(rows[2]),
        "tau2=300 should shed more often than tau2=900: {text}"
    );
}

#[test]
fn compare_rejects_different_plants() {
    let dir = tempfile::tempdir().unwrap();
    let output = gridshed(
        dir.path(),
        &[
            "compare",
            scenario("case1.scenario").to_str().unwrap(),
            scenario("motor.scenario").to_str().unwrap(),
        ],
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(
        stderr(&output).contains("different plants"),
        "{}",
        stderr(&output)
    );
}
