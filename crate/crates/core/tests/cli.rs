use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn parksim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parksim"))
        .args(args)
        .env("PARKSIM_LOG", "off")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn analyze_prints_csv() {
    let o = parksim(&[
        "analyze", "--lambda", "4", "--slots", "4", "--lambda-unit", "per-dwell",
        "--delta-g", "10.4", "--r", "2",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("p_full"));
    let row = lines.next().unwrap();
    let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
    assert!((fields[2] - 0.195_366_814_813_165).abs() < 1e-12, "{row}");
    assert_eq!(fields.last(), Some(&5.2), "{row}");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&parksim(&["frobnicate"])), 1);
    assert_eq!(code(&parksim(&["analyze", "--slots", "4"])), 1);
    assert_eq!(code(&parksim(&["--help"])), 0);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "facility.total_slots = zero\n").unwrap();
    let o = parksim(&["simulate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert_eq!(code(&parksim(&["report", "--in", "/nonexistent/events.jsonl"])), 2);
    let o = parksim(&["analyze", "--lambda", "4", "--slots", "4", "--lambda-unit", "per-hour"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unreachable_broker_exits_3() {
    // Grab a free port and release it so nothing is listening there.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let o = parksim(&["watch", "--broker", &addr, "--retries", "1", "--exit-after", "0.2"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn simulate_then_report_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = parksim(&[
        "simulate",
        "--scenario",
        scenario("day.cfg").to_str().unwrap(),
        "--seed",
        "11",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["events.jsonl", "metrics.csv", "report.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("seed 11") || report.contains("seed: 11"), "{report}");

    let again = dir.path().join("again.csv");
    let o = parksim(&[
        "report",
        "--in",
        out.join("events.jsonl").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(out.join("metrics.csv")).unwrap(),
        std::fs::read(again).unwrap()
    );
}
