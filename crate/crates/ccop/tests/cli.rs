//! End-to-end tests of the command-line interface: exit codes, output
//! formats, and validation of every report shape against the shipped schema.

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

use common::fixture;

fn run(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccop"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("spawn ccop")
}

fn run_fixture(sub: &str, name: &str, extra: &[&str]) -> Output {
    let path = fixture(name);
    let mut args = vec![sub, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ccop-cli-tests-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

// ---- minimal JSON Schema validator ----------------------------------------
// Supports the subset used by docs/report.schema.json: type (string or list),
// properties / required / additionalProperties(false), items, enum, oneOf,
// and $ref into #/$defs.

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some(),
        "number" => v.is_number(),
        other => panic!("unsupported type keyword {other}"),
    }
}

fn resolve<'a>(schema: &'a Value, root: &'a Value) -> &'a Value {
    match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let name = r
                .strip_prefix("#/$defs/")
                .unwrap_or_else(|| panic!("unsupported $ref {r}"));
            resolve(&root["$defs"][name], root)
        }
        None => schema,
    }
}

fn validate(schema: &Value, value: &Value, root: &Value, path: &str, errors: &mut Vec<String>) {
    let schema = resolve(schema, root);

    if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
        let mut hits = 0;
        for opt in options {
            let mut sub = Vec::new();
            validate(opt, value, root, path, &mut sub);
            if sub.is_empty() {
                hits += 1;
            }
        }
        if hits != 1 {
            errors.push(format!("{path}: matched {hits} oneOf branches, expected 1"));
        }
        return;
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            errors.push(format!("{path}: {value} not in {allowed:?}"));
        }
        return;
    }

    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, value),
            Value::Array(ts) => ts
                .iter()
                .any(|s| type_matches(s.as_str().expect("type string"), value)),
            _ => panic!("bad type keyword at {path}"),
        };
        if !ok {
            errors.push(format!("{path}: type mismatch, expected {t}, got {value}"));
            return;
        }
    }

    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for r in required {
                let key = r.as_str().unwrap();
                if !obj.contains_key(key) {
                    errors.push(format!("{path}: missing required key {key}"));
                }
            }
        }
        if let Some(props) = props {
            for (k, v) in obj {
                match props.get(k) {
                    Some(sub) => validate(sub, v, root, &format!("{path}/{k}"), errors),
                    None => {
                        if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                            errors.push(format!("{path}: unexpected key {k}"));
                        }
                    }
                }
            }
        }
    }

    if let Some(arr) = value.as_array() {
        if let Some(items) = schema.get("items") {
            for (i, v) in arr.iter().enumerate() {
                validate(items, v, root, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

fn assert_valid_report(bytes: &[u8]) -> Value {
    let schema_text = fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json"),
    )
    .expect("schema file");
    let schema: Value = serde_json::from_str(&schema_text).unwrap();
    let report: Value = serde_json::from_slice(bytes).expect("report JSON parses");
    let mut errors = Vec::new();
    validate(&schema, &report, &schema, "report", &mut errors);
    assert!(errors.is_empty(), "schema violations:\n{}", errors.join("\n"));
    report
}

// ---- exit codes -------------------------------------------------------------

#[test]
fn analyze_success_and_schema() {
    let out = run_fixture("analyze", "instability.toml", &[]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = assert_valid_report(&out.stdout);
    assert_eq!(report["points"].as_array().unwrap().len(), 1);
    // 1-based support of the origin is empty.
    assert_eq!(report["points"][0]["support"], serde_json::json!([]));
}

#[test]
fn analyze_all_fixtures_validate() {
    for name in [
        "instability.toml",
        "so_ss.toml",
        "stability.toml",
        "stability_compact.toml",
    ] {
        let out = run_fixture("analyze", name, &[]);
        assert_eq!(exit_code(&out), 0, "{name}");
        assert_valid_report(&out.stdout);
    }
}

#[test]
fn morse_report_validates_and_flags_coincidence() {
    let out = run_fixture("morse", "stability_compact.toml", &["--grid", "201"]);
    // The two minimizers share the value 1: the crossing is coincident, so
    // the run reports numerical indeterminacy while still emitting data.
    assert_eq!(exit_code(&out), 3);
    let report = assert_valid_report(&out.stdout);
    let sweep = &report["morse"]["sweep"];
    assert_eq!(sweep["beta0"], serde_json::json!([0, 2, 1]));
    assert_eq!(sweep["all_rules_match"], Value::Bool(true));
    assert_eq!(sweep["indeterminate"], Value::Bool(true));
    let crossings = sweep["crossings"].as_array().unwrap();
    assert_eq!(crossings.len(), 2);
    // 1-based point indices.
    for c in crossings {
        for ix in c["point_indices"].as_array().unwrap() {
            assert!(ix.as_u64().unwrap() >= 1);
        }
    }
    assert_eq!(report["morse"]["mountain_pass"]["holds"], Value::Bool(true));
}

#[test]
fn morse_without_compactness_flag_is_refused() {
    let out = run_fixture("morse", "stability.toml", &[]);
    assert_eq!(exit_code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("compact"));
}

#[test]
fn perturb_report_validates() {
    let out = run_fixture(
        "perturb",
        "instability.toml",
        &["--linear=-2,-2", "--epsilons", "0.05,0.1"],
    );
    assert_eq!(exit_code(&out), 0);
    let report = assert_valid_report(&out.stdout);
    let rows = report["perturb"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["points"].as_array().unwrap().len(), 3);
    assert_eq!(rows[1]["bifurcation"], Value::Bool(true));
}

#[test]
fn probe_report_validates() {
    let out = run_fixture("probe", "instability.toml", &["--trials", "5"]);
    assert_eq!(exit_code(&out), 0);
    let report = assert_valid_report(&out.stdout);
    assert_eq!(report["probe"]["trials"], serde_json::json!(5));
    assert_eq!(report["probe"]["nondegenerate_fraction"], serde_json::json!(1.0));
}

#[test]
fn missing_file_is_an_input_error() {
    let out = run(&["analyze", "/nonexistent/problem.toml"]);
    assert_eq!(exit_code(&out), 2);
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_key_is_an_input_error() {
    let path = temp_path("unknown_key.toml");
    fs::write(&path, "n = 2\ns = 1\nobjective = \"x1^2\"\nbox = [[-1,1],[-1,1]]\nbogus = 3\n")
        .unwrap();
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn parse_error_is_an_input_error() {
    let path = temp_path("bad_expr.toml");
    fs::write(
        &path,
        "n = 2\ns = 1\nobjective = \"x1^2 + \"\nbox = [[-1,1],[-1,1]]\n",
    )
    .unwrap();
    let out = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}

#[test]
fn bad_level_lists_are_input_errors() {
    for levels in ["1,bogus", "2,1", "1.0,2.5"] {
        let out = run_fixture(
            "morse",
            "stability_compact.toml",
            &["--grid", "101", "--levels", levels],
        );
        assert_eq!(exit_code(&out), 2, "levels = {levels}");
    }
}

#[test]
fn wrong_length_perturbation_is_an_input_error() {
    let out = run_fixture("perturb", "instability.toml", &["--linear", "1,2,3"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn out_flag_writes_the_report() {
    let path = temp_path("report.json");
    let out = run_fixture(
        "analyze",
        "so_ss.toml",
        &["--out", path.to_str().unwrap()],
    );
    assert_eq!(exit_code(&out), 0);
    assert!(out.stdout.is_empty());
    let bytes = fs::read(&path).unwrap();
    assert_valid_report(&bytes);
}

#[test]
fn text_format_is_human_readable() {
    let out = run_fixture("analyze", "stability.toml", &["--format", "text"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("ccop "));
    assert!(text.contains("stationary points: 3"));
    assert!(text.contains("m_index = 1"));
}

#[test]
fn help_exits_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["analyze", "morse", "perturb", "probe"] {
        assert!(text.contains(sub), "help lists {sub}");
    }
}

#[test]
fn tol_flag_is_applied_uniformly() {
    let out = run_fixture("analyze", "instability.toml", &["--tol", "1e-6"]);
    assert_eq!(exit_code(&out), 0);
    let report = assert_valid_report(&out.stdout);
    assert_eq!(report["config"]["tol_main"], report["config"]["tol_zero"]);
    assert_eq!(report["config"]["tol_main"], report["config"]["tol_act"]);
}
