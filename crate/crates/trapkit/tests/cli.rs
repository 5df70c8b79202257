//! End-to-end tests for the `trapkit` binary: exit codes, the READY
//! handshake, and the gen-corpus / select / run / report pipeline.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trapkit"))
}

fn write_config(dir: &Path, root: &Path) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        format!("roots = [{:?}]\nmethod = \"apfo\"\n", root.display()),
    )
    .unwrap();
    path
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn attack_on_unmarked_root_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("f.txt"), b"data").unwrap();
    let out = bin()
        .args(["attack", "--root"])
        .arg(tmp.path())
        .args(["--profile", "lockbit"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("refusing to attack"), "{stderr}");
    // And the file is untouched.
    assert_eq!(fs::read(tmp.path().join("f.txt")).unwrap(), b"data");
}

#[test]
fn missing_config_file_fails() {
    let out = bin()
        .args(["select", "--config", "/nonexistent/config.toml", "--out", "/tmp/x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_gen_select_run_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("corpus");
    let manifest = tmp.path().join("manifest.json");
    let traps = tmp.path().join("traps.json");
    let results = tmp.path().join("results.jsonl");
    let config = write_config(tmp.path(), &root);

    let out = bin()
        .args(["gen-corpus", "--preset", "small", "--seed", "7", "--root"])
        .arg(&root)
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join(".trapkit-corpus").is_file());

    let out = bin()
        .args(["select", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&traps)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let list: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&traps).unwrap()).unwrap();
    assert!(!list["entries"].as_array().unwrap().is_empty());

    let out = bin()
        .args(["run", "--root"])
        .arg(&root)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--config")
        .arg(&config)
        .args(["--profile", "babuk", "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let result: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(result["profile"], "babuk");
    assert!(result["files_lost"].as_u64().unwrap() < result["total_files"].as_u64().unwrap());

    fs::write(&results, format!("{}\n", stdout.trim())).unwrap();
    let out = bin()
        .args(["report", "--format", "csv", "--results"])
        .arg(&results)
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("method,"));
    assert!(csv.contains("apfo"));

    // Corpus is pristine again: restore is a no-op that still succeeds.
    let out = bin()
        .args(["restore", "--root"])
        .arg(&root)
        .arg("--manifest")
        .arg(&manifest)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn monitor_prints_ready_then_alert() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("corpus");
    let manifest = tmp.path().join("manifest.json");
    let traps = tmp.path().join("traps.json");
    let audit = tmp.path().join("audit.jsonl");
    let config = write_config(tmp.path(), &root);

    assert!(bin()
        .args(["gen-corpus", "--preset", "small", "--seed", "11", "--root"])
        .arg(&root)
        .arg("--manifest")
        .arg(&manifest)
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["select", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&traps)
        .status()
        .unwrap()
        .success());

    let mut child = bin()
        .args(["monitor", "--traps"])
        .arg(&traps)
        .arg("--audit-log")
        .arg(&audit)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut reader = BufReader::new(stdout);

    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert_eq!(line.trim_end(), "READY", "first line must be the READY handshake");

    // Touch the first trap.
    let list: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&traps).unwrap()).unwrap();
    let trap_path = list["entries"][0]["active_path"].as_str().unwrap();
    fs::write(trap_path, b"tampered").unwrap();

    let status = wait_with_timeout(&mut child, Duration::from_secs(10));
    assert_eq!(status, Some(0), "monitor should exit 0 after first alert");

    let mut alert = String::new();
    reader.read_line(&mut alert).unwrap();
    let report: serde_json::Value = serde_json::from_str(alert.trim()).unwrap();
    assert_eq!(report["event"]["path"].as_str().unwrap(), trap_path);

    let audit_text = fs::read_to_string(&audit).unwrap();
    assert_eq!(audit_text.lines().count(), 1);
}

fn wait_with_timeout(child: &mut std::process::Child, timeout: Duration) -> Option<i32> {
    let deadline = std::time::Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            return status.code();
        }
        if std::time::Instant::now() > deadline {
            let _ = child.kill();
            return None;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}
