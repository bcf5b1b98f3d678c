//! End-to-end runs of the `coarsekit` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coarsekit")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    fs::write(dir.join(name), serde_json::to_vec_pretty(v).unwrap()).unwrap();
    name.to_string()
}

fn line_recipe(radius: f64) -> Value {
    json!({"kind": "cayley", "group": "lattice", "dim": 1, "radius": radius})
}

#[test]
fn brick_then_verify_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let recipe = write(dir, "z.json", &json!({"schema_version": 1, "recipe": line_recipe(60.0)}));
    let out = run(dir, &["--out", "a", "certify", "brick", "--recipe", &recipe]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["status"], "ok");
    let out = run(dir, &["--out", "b", "certify", "verify", "--cert", "a/cert.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let env: Value = serde_json::from_slice(&fs::read(dir.join("b/certify-verify.json")).unwrap()).unwrap();
    assert_eq!(env["result"]["pass"], true);
    assert!(fs::read_to_string(dir.join("b/certify-verify.md")).unwrap().contains("<svg"));
}

#[test]
fn tampered_certificate_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let recipe = write(dir, "z.json", &json!({"schema_version": 1, "recipe": line_recipe(60.0)}));
    assert_eq!(run(dir, &["--out", "a", "certify", "brick", "--recipe", &recipe]).status.code(), Some(0));
    let mut cert: Value = serde_json::from_slice(&fs::read(dir.join("a/cert.json")).unwrap()).unwrap();
    cert["n"] = json!(0);
    let bad = write(dir, "bad.json", &cert);
    let out = run(dir, &["--out", "b", "certify", "verify", "--cert", &bad]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_cover_exits_one_with_pointer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cover = write(dir, "c.json", &json!({"schema_version": 1, "window": line_recipe(5.0), "members": []}));
    let out = run(dir, &["--out", "o", "cover", "stats", "--cover", &cover]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["pointer"], "/members");
    assert_eq!(err["error"]["exit_code"], 1);
    let saved: Value = serde_json::from_slice(&fs::read(dir.join("o/error.json")).unwrap()).unwrap();
    assert_eq!(saved, err);
}

#[test]
fn unknown_label_points_at_the_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cover = write(dir, "c.json", &json!({"schema_version": 1, "window": line_recipe(3.0), "members": [["(0)", "(1)"], ["(2)", "(9)"]]}));
    let out = run(dir, &["--out", "o", "cover", "stats", "--cover", &cover]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["pointer"], "/members/1/1");
}

#[test]
fn wrong_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let recipe = write(dir, "z.json", &json!({"schema_version": 7, "recipe": line_recipe(5.0)}));
    let out = run(dir, &["--out", "o", "space", "build", "--recipe", &recipe]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["pointer"], "/schema_version");
}

#[test]
fn exhausted_search_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let recipe = write(dir, "z.json", &json!({"schema_version": 1, "recipe": line_recipe(40.0)}));
    let out = run(dir, &["--out", "o", "certify", "search", "--recipe", &recipe, "--n", "0", "--c", "6", "--seeds", "0,1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_matches_flags_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let flags = run(dir, &["--out", "f", "cone", "seq", "--a", "3.5", "--len", "9"]);
    assert_eq!(flags.status.code(), Some(0));
    let cfg = write(dir, "run.json", &json!({"schema_version": 1, "run": {"command": "cone-seq", "a": 3.5, "len": 9}}));
    let file = run(dir, &["--out", "g", "run", "--config", &cfg]);
    assert_eq!(file.status.code(), Some(0), "{}", String::from_utf8_lossy(&file.stderr));
    assert_eq!(flags.stdout.len(), file.stdout.len());
    for name in ["cone-seq.json", "cone-seq.md", "sequence.csv"] {
        assert_eq!(fs::read(dir.join("f").join(name)).unwrap(), fs::read(dir.join("g").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn help_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("certify"));
}
