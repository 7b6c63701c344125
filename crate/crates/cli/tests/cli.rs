use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn crowdshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdshape"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn oracle_dump_has_versioned_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fl0.csv");
    let o = crowdshape(&[
        "oracle",
        "--env",
        "frozen_lake",
        "--map",
        "0",
        "--episodes",
        "3000",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(stdout(&o).contains("greedy success 100%"));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# crowdshape oracle q-table v1"));
    let meta = lines.next().unwrap();
    assert!(
        meta.contains("env=frozen_lake(0)") && meta.contains("actions=4"),
        "{meta}"
    );
    let states: usize = meta
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("states="))
        .and_then(|n| n.parse().ok())
        .unwrap();
    assert_eq!(lines.next(), Some("state,a0,a1,a2,a3"));
    assert_eq!(lines.count(), states);
}

#[test]
fn run_then_report_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"env": {"kind": "frozen_lake", "map_variant": 0}, "trials": 2, "episodes": 30,
            "oracle": {"episodes": 2000}, "arms": ["baseline", "al_entropy"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let table = stdout(&crowdshape(&["run", "--config", p(&config), "--out-dir", p(&out_dir)]));
    for f in [
        "returns.csv",
        "queries.csv",
        "trainer_posteriors.csv",
        "summary.csv",
        "config.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    assert!(table.contains("baseline") && table.contains("al_entropy"));

    let returns = std::fs::read_to_string(out_dir.join("returns.csv")).unwrap();
    assert_eq!(returns.lines().next(), Some("arm,trial,episode,return"));
    assert_eq!(returns.lines().count(), 1 + 2 * 2 * 30);

    let reported = stdout(&crowdshape(&["report", "--in-dir", p(&out_dir)]));
    assert_eq!(reported, table);
}

#[test]
fn default_config_round_trips_through_run() {
    let text = stdout(&crowdshape(&["default-config"]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["trials"], 50);
    assert_eq!(v["arms"], serde_json::json!(["baseline", "al_random", "al_entropy"]));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"trails": 3}"#).unwrap();
    let o = crowdshape(&["run", "--config", p(&config), "--out-dir", p(&dir.path().join("x"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));

    let o = crowdshape(&["report", "--in-dir", p(&dir.path().join("nowhere"))]);
    assert!(!o.status.success());

    let o = crowdshape(&["oracle", "--env", "chess", "--out", p(&dir.path().join("o.csv"))]);
    assert!(!o.status.success());

    let o = crowdshape(&["serve", "--config", p(&config), "--port", "0"]);
    assert!(!o.status.success());
}

#[test]
fn serve_answers_status_requests() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("live.json");
    std::fs::write(
        &config,
        r#"{"env": {"kind": "frozen_lake", "map_variant": 0}, "trials": 1, "episodes": 3,
            "oracle": {"episodes": 2000}, "arms": ["al_entropy"]}"#,
    )
    .unwrap();
    let sessions = dir.path().join("sessions.json");
    std::fs::write(&sessions, r#"[{"token": "abc", "trainer_id": 9}]"#).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_crowdshape"))
        .args([
            "serve",
            "--config",
            p(&config),
            "--port",
            "0",
            "--query-timeout-secs",
            "1",
        ])
        .args(["--sessions-file", p(&sessions)])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    let addr = banner
        .split("http://")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap_or_else(|| panic!("banner: {banner}"))
        .to_string();
    assert!(banner.contains("1 session"));

    let mut conn = TcpStream::connect(&addr).unwrap();
    write!(
        conn,
        "GET /api/status HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    conn.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let status: serde_json::Value = serde_json::from_str(body).unwrap();
    for key in ["episode", "mean_return_window", "pending_queries", "trainers"] {
        assert!(status.get(key).is_some(), "{key} missing from {body}");
    }
}
