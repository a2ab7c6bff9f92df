use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(file)
}

fn gkab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gkab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Runs with `--json` into a temporary file and returns exit code and report.
fn gkab_json(args: &[&str]) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let mut all = args.to_vec();
    all.extend(["--json", path.to_str().unwrap()]);
    let out = gkab(&all);
    let report = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("no report: {}", String::from_utf8_lossy(&out.stderr)));
    (code(&out), serde_json::from_str(&report).unwrap())
}

#[test]
fn verify_reachability_holds() {
    let (status, report) = gkab_json(&["verify", data("reach.kab").to_str().unwrap(), "--formula", "reach"]);
    assert_eq!(status, 0);
    assert_eq!(report["verdict"], Value::Bool(true));
    assert_eq!(report["states"], 2);
}

#[test]
fn verify_false_property_exits_one() {
    let (status, report) = gkab_json(&["verify", data("reach.kab").to_str().unwrap(), "--formula", "never"]);
    assert_eq!(status, 1);
    assert_eq!(report["verdict"], Value::Bool(false));
}

#[test]
fn b_repairs_of_a_clash() {
    let (status, report) = gkab_json(&["repairs", "--kind", "b", data("clash.kab").to_str().unwrap()]);
    assert_eq!(status, 0);
    let repairs = report["repairs"].as_array().unwrap();
    assert_eq!(repairs.len(), 2);
    assert_eq!(repairs[0], serde_json::json!(["N1(a)", "N3(b)"]));
    assert_eq!(repairs[1], serde_json::json!(["N2(a)", "N3(b)"]));
}

#[test]
fn c_repair_of_a_clash() {
    let (status, report) = gkab_json(&["repairs", "--kind", "c", data("clash.kab").to_str().unwrap()]);
    assert_eq!(status, 0);
    assert_eq!(report["repairs"], serde_json::json!([["N3(b)"]]));
}

#[test]
fn inconsistency_is_a_failed_property() {
    let (status, report) = gkab_json(&["check-consistency", data("clash.kab").to_str().unwrap()]);
    assert_eq!(status, 1);
    assert_eq!(report["conflicting"], serde_json::json!(["N1(a)", "N2(a)"]));
}

#[test]
fn evolution_prefers_new_facts() {
    let (status, report) = gkab_json(&["evolve", data("reach.kab").to_str().unwrap(), "--add", "N(a)"]);
    assert_eq!(status, 0);
    assert_eq!(report["abox"], serde_json::json!(["M(a)", "N(a)"]));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&gkab(&["verify", "--no-such-flag", data("reach.kab").to_str().unwrap()])), 2);
}

#[test]
fn parse_error_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.kab");
    std::fs::write(&bad, "tbox { concept N; }\nabox { N(a) }\n").unwrap();
    let out = gkab(&["check-consistency", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:"));
}

#[test]
fn state_limit_is_a_resource_error() {
    let out = gkab(&["build-ts", "--semantics", "b", data("grow.kab").to_str().unwrap(), "--max-states", "2"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn compiled_systems_are_bisimilar_to_their_sources() {
    let dir = tempfile::tempdir().unwrap();
    let src = data("grow.kab");
    let cases = [("sgkab-from-b", "l", "b"), ("sgkab-from-c", "s", "c"), ("sgkab-from-e", "s", "e"), ("sgkab-from-skab", "e", "s"), ("skab", "j", "s")];
    for (target, kind, semantics) in cases {
        let out = gkab(&["compile", "--to", target, src.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let path = dir.path().join(format!("{target}.kab"));
        std::fs::write(&path, &out.stdout).unwrap();
        let (status, report) = gkab_json(&[
            "bisim",
            "--kind",
            kind,
            "--left",
            src.to_str().unwrap(),
            "--left-semantics",
            semantics,
            "--right",
            path.to_str().unwrap(),
        ]);
        assert_eq!(status, 0, "{target}: {report}");
        let (_, source) = gkab_json(&["verify", src.to_str().unwrap(), "--semantics", semantics, "--formula", "done"]);
        let (_, compiled) = gkab_json(&["verify", path.to_str().unwrap(), "--formula", "done"]);
        assert_eq!(source["verdict"], compiled["verdict"], "{target}");
    }
}

#[test]
fn dumped_ts_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let dumps: Vec<String> = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("ts{i}.json"));
            let out = gkab(&["build-ts", "--semantics", "e", data("grow.kab").to_str().unwrap(), "--dump-ts", path.to_str().unwrap()]);
            assert_eq!(code(&out), 0);
            std::fs::read_to_string(path).unwrap()
        })
        .collect();
    assert_eq!(dumps[0], dumps[1]);
    let ts: Value = serde_json::from_str(&dumps[0]).unwrap();
    assert_eq!(ts["initial"], 0);
    assert!(ts["states"].as_array().unwrap().len() > 1);
}

#[test]
fn formula_translation_lists_each_formula() {
    let out = gkab(&["translate-formula", "--kind", "d", data("reach.kab").to_str().unwrap(), "--formula", "reach"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "formula reach: mu Z. [N(a)] | <><>Z;");
}
