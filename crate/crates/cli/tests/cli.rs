use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn facehint() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_facehint"));
    for var in [
        "FACEHINT_CONFIG",
        "FACEHINT_PORT",
        "FACEHINT_DATA_DIR",
        "FACEHINT_COHORT",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn shipped(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(rel)
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn simulate_then_report_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    for policy in ["informed", "naive"] {
        let out = facehint()
            .args([
                "simulate",
                "--policy",
                policy,
                "--sessions",
                "12",
                "--seed",
                "3",
            ])
            .env("FACEHINT_DATA_DIR", dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{:?}", text(&out));
        assert!(text(&out)
            .0
            .contains(&format!("wrote 12 {policy} sessions")));
    }
    let logs = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(logs, 24);

    let out = facehint().arg("report").arg(dir.path()).output().unwrap();
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    for metric in [
        "collisions",
        "triggers",
        "acceptances",
        "compliances",
        "explorer_score",
        "test_game_score",
    ] {
        assert!(
            stdout.lines().any(|l| l.starts_with(metric)),
            "{metric} missing from\n{stdout}"
        );
    }

    let out = facehint()
        .arg("analyze")
        .arg(dir.path())
        .args(["--unit", "trial"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let analysis: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(analysis["sessions_a"], 12);
    assert_eq!(analysis["sessions_b"], 12);
    assert!(analysis["rows"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["metric"] == "score"));
}

#[test]
fn validate_rules_accepts_shipped_table_and_rejects_broken_ones() {
    let out = facehint()
        .arg("validate-rules")
        .arg(shipped("default_rules.toml"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{:?}", text(&out));
    assert!(text(&out).0.contains("ok"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("rules.toml");
    std::fs::write(
        &bad,
        "neutral_threshold = 50\n[[rules]]\nemotion = \"happy\"\naus = [\"AU99\"]\n",
    )
    .unwrap();
    let out = facehint().arg("validate-rules").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(text(&out).1.starts_with("error:"));
}

#[test]
fn validate_map_checks_each_file() {
    let maps: Vec<PathBuf> = (1..=9)
        .map(|i| shipped(&format!("maps/map-{i}.toml")))
        .collect();
    let out = facehint()
        .arg("validate-map")
        .arg("--default-profile")
        .args(&maps)
        .output()
        .unwrap();
    assert!(out.status.success(), "{:?}", text(&out));
    assert_eq!(text(&out).0.lines().count(), 9);

    let dir = tempfile::tempdir().unwrap();
    let walled = dir.path().join("walled.toml");
    std::fs::write(
        &walled,
        "id = \"walled\"\nwidth = 3\nheight = 1\nstart = [0, 0]\ngoal = [2, 0]\nenemies = []\nobstacles = [[1, 0]]\n",
    )
    .unwrap();
    let out = facehint()
        .arg("validate-map")
        .arg(&maps[0])
        .arg(&walled)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let (stdout, stderr) = text(&out);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stderr.contains("walled.toml"), "{stderr}");
}

#[test]
fn ingest_reads_frames_from_stdin() {
    let mut child = facehint()
        .args(["ingest", "--horizon-ms", "500"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        for t in (0..1000).step_by(100) {
            writeln!(stdin, r#"{{"t_ms":{t},"aus":{{"AU06":1,"AU12":1}}}}"#).unwrap();
        }
        writeln!(stdin, "{{\"t_ms\": 5}}").unwrap();
    }
    let out = child.wait_with_output().unwrap();
    let (stdout, stderr) = text(&out);
    assert!(!out.status.success());
    assert!(stderr.contains("line 11"), "{stderr}");
    let last: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["triggers"], 0);
    assert_eq!(
        stdout.lines().filter(|l| l.contains("\"happy\"")).count(),
        10
    );
}

#[test]
fn serve_uses_config_file_with_env_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("facehint.toml");
    std::fs::write(
        &config,
        "port = 1\ndata_dir = \"logs\"\ncohort = \"AutoHint\"\nseed = 40\n",
    )
    .unwrap();
    let mut child = facehint()
        .arg("serve")
        .env("FACEHINT_CONFIG", &config)
        .env("FACEHINT_PORT", "0")
        .env("FACEHINT_COHORT", "XAutoHint")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    let addr = banner
        .strip_prefix("listening on ")
        .and_then(|r| r.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected banner {banner:?}"))
        .to_string();

    let stream = TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    writeln!(writer, r#"{{"op":"create_session"}}"#).unwrap();
    let mut reply = String::new();
    reader.read_line(&mut reply).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    let reply: serde_json::Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(reply["ok"], true, "{reply}");
    // XAutoHint from the environment: the global explanation is served.
    assert!(reply["global_explanation"].is_object());
    let id = reply["session_id"].as_str().unwrap();
    assert!(id.ends_with("-40"), "{id}");
    assert!(dir.path().join("logs").join(format!("{id}.jsonl")).exists());
}
