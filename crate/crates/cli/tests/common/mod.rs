#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn qnpe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qnpe"))
}

/// Runs `qnpe` with `args`, returning the output whatever the exit code.
pub fn run(args: &[&str]) -> Output {
    qnpe().args(args).output().expect("spawn qnpe")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "qnpe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

/// Validates `path` against a schema shipped in `schemas/`.
pub fn assert_valid(schema: &str, path: &Path) {
    let schema = read_json(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let instance = read_json(path);
    let errors: Vec<String> = validator
        .iter_errors(&instance)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{} invalid: {errors:?}", path.display());
}

pub fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON on stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

pub fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
