use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::time::Duration;

use vacgrip::driver::SuctionDriver;
use vacgrip::link::TcpLink;
use vacgrip::protocol::Channel;

fn vacgrip() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vacgrip"));
    c.env_remove("VACGRIP_CONFIG");
    c
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = vacgrip().args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["harness", "run", "--trials", "many"]).0, 2);
    for sub in [
        vec!["--help"],
        vec!["device", "--help"],
        vec!["pneumo", "plot", "--help"],
        vec!["sim", "run", "--help"],
        vec!["harness", "run", "--help"],
        vec!["data", "stats", "--help"],
        vec!["data", "validate", "--help"],
        vec!["serve", "--help"],
    ] {
        assert_eq!(run(&sub).0, 0, "{sub:?}");
    }
}

#[test]
fn glass_plot_ends_near_full_vacuum() {
    let (code, out, _) = run(&["pneumo", "plot", "--material", "glass"]);
    assert_eq!(code, 0);
    let last = out.lines().last().unwrap();
    let p: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((p + 60.0).abs() < 60.0 * 0.02, "{last}");
    assert_eq!(run(&["pneumo", "plot", "--material", "basalt"]).0, 1);
}

#[test]
fn harness_run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("results.csv");
    let (code, out, _) = run(&[
        "harness", "run", "--task", "2", "--trials", "15", "--seed-base", "7", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("task 2 hybrid: 15/15"), "{out}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "task,seed,success,cause,duration_s,error_offset_m");
    assert_eq!(text.lines().count(), 16);
    assert!(text.lines().nth(1).unwrap().starts_with("2,7,true,none,"));
}

#[test]
fn sim_run_is_deterministic_and_episodes_validate() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("t4.ep");
    let args = ["sim", "run", "--scene", "task4", "--seed", "3", "--jitter", "0.02", "--out", ep.to_str().unwrap()];
    let (code, first, _) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(run(&args).1, first);
    let (code, out, _) = run(&["data", "validate", ep.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("ok "));
    let (code, out, _) = run(&["data", "stats", dir.path().to_str().unwrap(), "--horizon", "50"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["horizon"], 50);
}

#[test]
fn corrupt_episode_reports_step_index() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.ep");
    assert_eq!(run(&["sim", "run", "--scene", "task4", "--out", good.to_str().unwrap()]).0, 0);
    let text = std::fs::read_to_string(&good).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"t\": 0.1, \"proprio\": [0.0], \"action\": []}";
    let bad = dir.path().join("bad.ep");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let (code, _, err) = run(&["data", "validate", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("step 3"), "{err}");
}

#[test]
fn config_file_overrides_defaults_and_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vacgrip.toml");
    std::fs::write(&cfg, "trials = 2\n").unwrap();
    let out = vacgrip()
        .env("VACGRIP_CONFIG", &cfg)
        .args(["harness", "run", "--task", "4", "--zero-jitter"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
    std::fs::write(&cfg, "rate_hz = -1.0\n").unwrap();
    let out = vacgrip().env("VACGRIP_CONFIG", &cfg).args(["pneumo", "plot"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn device_serves_the_protocol_over_tcp() {
    let mut child = vacgrip()
        .args(["device", "--channel", "right", "--listen", "127.0.0.1:0", "--once"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut addr = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut addr).unwrap();
    let link = TcpLink::connect(addr.trim()).unwrap();
    let mut driver = SuctionDriver::new(Channel::Right, link).with_timeout(Duration::from_secs(2));
    let st = driver.set_suction(true).unwrap();
    assert!(st.confirmed.pump_on() && st.confirmed.valve_closed());
    std::thread::sleep(Duration::from_millis(600));
    let st = driver.poll_status().unwrap();
    assert!(st.pressure_kpa < -40.0, "{}", st.pressure_kpa);
    let st = driver.set_suction(false).unwrap();
    assert!(!st.confirmed.pump_on());
    drop(driver);
    assert!(child.wait().unwrap().success());
}
