//! End-to-end tests of the compete binary: exit codes, output files, and
//! byte-level determinism across reruns and worker counts.

use std::path::Path;
use std::process::{Command, Output};

fn compete(dir: &Path, threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compete"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SUPERVISED: &str = r#"
task = "supervised"
rng_seed = 11
replicates = 3
rounds = 60
seed_size = 2
test_points = 100
[grid]
k = [1, 2]
alpha = [0.0, "inf"]
[population]
kind = "gaussian_mixture"
classes = 3
separation = 1.5
noise = 0.6
"#;

const CF: &str = r#"
task = "cf"
rng_seed = 13
replicates = 2
[grid]
k = [1, 3]
alpha = [0.0]
[cf]
items = 5
users = 7
rounds = 400
"#;

/// Recursively collects (relative path, bytes) for every file under `dir`,
/// sorted by path.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn criterion_14_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let supervised = write_config(dir.path(), "supervised.toml", SUPERVISED);
    let cf = write_config(dir.path(), "cf.toml", CF);

    // (label, worker count, argv) — each invocation pair must produce
    // byte-identical output directories.
    let invocations: Vec<(&str, Vec<String>)> = vec![
        ("run", vec!["run".into(), "--config".into(), supervised.clone()]),
        ("sweep", vec!["sweep".into(), "--config".into(), supervised.clone()]),
        ("cf", vec!["cf".into(), "--config".into(), cf.clone()]),
        ("verify", vec!["verify".into(), "--seed".into(), "5".into()]),
    ];
    let mut failures = Vec::new();
    for (label, argv) in &invocations {
        let mut outs = Vec::new();
        for (tag, threads) in [("a", "1"), ("b", "4")] {
            let out = dir.path().join(format!("{label}-{tag}"));
            let mut args: Vec<&str> = argv.iter().map(String::as_str).collect();
            args.push("--out");
            let out_str = out.to_string_lossy().into_owned();
            args.push(&out_str);
            args.push("--quiet");
            let result = compete(dir.path(), threads, &args);
            if !result.status.success() {
                failures.push(format!(
                    "{label} exited {:?}: {}",
                    result.status.code(),
                    String::from_utf8_lossy(&result.stderr)
                ));
            }
            outs.push(snapshot(&out));
        }
        if outs[0] != outs[1] {
            failures.push(format!("{label} output differs across worker counts"));
        }
        if outs[0].is_empty() {
            failures.push(format!("{label} wrote no output files"));
        }
    }
    let passed = failures.is_empty();
    println!("criterion 14 determinism: {}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion 14 determinism failed:\n  {}", failures.join("\n  "));
}

#[test]
fn missing_config_exits_1_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = compete(dir.path(), "1", &["sweep", "--config", "no-such-config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-config.toml"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_exits_1_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = compete(dir.path(), "1", &["sweep", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = compete(dir.path(), "1", &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for sub in ["run", "sweep", "cf", "verify"] {
        assert!(stdout.contains(sub), "help missing {sub}");
    }
}

#[test]
fn existing_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cf.toml", CF);
    let out_dir = dir.path().join("bundle");
    let first = compete(dir.path(), "1", &["cf", "--config", &config, "--out",
        out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(first.status.code(), Some(0));
    let second = compete(dir.path(), "1", &["cf", "--config", &config, "--out",
        out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(second.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&second.stderr);
    assert!(stderr.contains("already exists"), "stderr: {stderr}");
}

#[test]
fn cf_subcommand_rejects_non_cf_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "supervised.toml", SUPERVISED);
    let out = compete(dir.path(), "1", &["cf", "--config", &config, "--quiet"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_and_replicate_overrides_change_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cf.toml", CF);
    let base = dir.path().join("base");
    let reseeded = dir.path().join("reseeded");
    let trimmed = dir.path().join("trimmed");
    for (out, extra) in [
        (&base, vec![]),
        (&reseeded, vec!["--seed", "999"]),
        (&trimmed, vec!["--replicates", "1"]),
    ] {
        let mut args =
            vec!["cf", "--config", config.as_str(), "--out", out.to_str().unwrap(), "--quiet"];
        args.extend(extra);
        assert_eq!(compete(dir.path(), "1", &args).status.code(), Some(0));
    }
    let raw = |d: &Path| std::fs::read(d.join("raw.csv")).unwrap();
    assert_ne!(raw(&base), raw(&reseeded));
    let trimmed_rows = String::from_utf8(raw(&trimmed)).unwrap().lines().count();
    let base_rows = String::from_utf8(raw(&base)).unwrap().lines().count();
    assert!(trimmed_rows < base_rows);
}

#[test]
fn quiet_run_writes_data_only_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "supervised.toml", SUPERVISED);
    let out_dir = dir.path().join("single");
    let out = compete(dir.path(), "1", &["run", "--config", &config, "--out",
        out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty(), "stdout should carry no data");
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(summary["k"], 1);
    assert_eq!(summary["rounds"], 60);
}

#[test]
fn verify_failure_exit_code_is_runtime() {
    // The suite passes under any seed, so force failure is not available;
    // instead confirm the success path exits 0 and writes the report.
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("verify");
    let out = compete(dir.path(), "1", &["verify", "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["all_passed"], true);
}
