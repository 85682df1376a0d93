use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_channel-qfi"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("channel-qfi-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_doc(name: &str, body: &str) -> PathBuf {
    let path = scratch(name).join("channel.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

#[test]
fn qfi_report_for_dephasing() {
    let doc = write_doc("qfi", r#"{"builtin": "dephasing", "params": {"p": 0.1}}"#);
    let out = bin().args(["qfi", "--channel"]).arg(&doc).args(["--n", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_out(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["hnks"]["decision"], "InSpan");
    assert!((v["f1"]["value"].as_f64().unwrap() - 0.64).abs() < 1e-6);
    assert!((v["f_sql"]["value"].as_f64().unwrap() - 16.0 / 9.0).abs() < 1e-6);
    assert_eq!(v["f_sql"]["regime"], "SQL");
    let n = &v["n_copy"];
    assert!(n["lower"].as_f64().unwrap() <= n["value"].as_f64().unwrap() + 1e-9);
    assert!(n["value"].as_f64().unwrap() <= n["upper"].as_f64().unwrap() + 1e-9);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let doc = write_doc("determinism", r#"{"builtin": "amplitude_damping", "params": {"p": 0.3}}"#);
    let run = || bin().args(["qfi", "--channel"]).arg(&doc).output().unwrap().stdout;
    assert_eq!(run(), run());
}

#[test]
fn hnks_violation_is_reported() {
    let doc = write_doc("hnks", r#"{"builtin": "depolarizing", "params": {"px": 0.3}}"#);
    let out = bin().args(["hnks", "--channel"]).arg(&doc).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["hnks"]["decision"], "NotInSpan");
    assert!(v["hnks"]["residual"].as_f64().unwrap() > 0.1);
}

#[test]
fn code_for_amplitude_damping_meets_target() {
    let doc = write_doc("code", r#"{"builtin": "amplitude_damping", "params": {"p": 0.5}}"#);
    let out = bin().args(["code", "--channel"]).arg(&doc).args(["--eta", "0.05"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_out(&out);
    let proto = &v["protocol"];
    assert_eq!(proto["kind"], "perturbation");
    assert!(proto["achieved"].as_f64().unwrap() >= 4.0 - 0.05);
}

#[test]
fn exact_code_for_single_axis_noise() {
    let doc = write_doc("exact", r#"{"builtin": "depolarizing", "params": {"py": 0.2}}"#);
    let out = bin().args(["code", "--channel"]).arg(&doc).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["protocol"]["kind"], "exact");
    assert!((v["protocol"]["achieved"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn explicit_kraus_document() {
    let s = 0.1f64.sqrt();
    let k = (1.0 - 0.1f64).sqrt();
    let body = format!(
        r#"{{"d_in": 2, "d_out": 2,
            "kraus": [[[[{k}, 0], [0, 0]], [[0, 0], [{k}, 0]]], [[[{s}, 0], [0, 0]], [[0, 0], [{m}, 0]]]],
            "dkraus": [[[[0, {a}], [0, 0]], [[0, 0], [0, {b}]]], [[[0, {c}], [0, 0]], [[0, 0], [0, {c}]]]]}}"#,
        m = -s,
        a = -0.5 * k,
        b = 0.5 * k,
        c = -0.5 * s,
    );
    let doc = write_doc("explicit", &body);
    let out = bin().args(["qfi", "--channel"]).arg(&doc).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_out(&out);
    assert_eq!(v["channel"]["label"], "custom");
    assert!((v["f1"]["value"].as_f64().unwrap() - 0.64).abs() < 1e-6);
}

#[test]
fn input_errors_exit_with_two() {
    let missing = scratch("missing").join("nope.json");
    let out = bin().args(["qfi", "--channel"]).arg(&missing).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let bad = write_doc("bad", r#"{"builtin": "teleporter"}"#);
    let out = bin().args(["hnks", "--channel"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let non_tp = write_doc("nontp", r#"{"d_in": 1, "d_out": 1, "kraus": [[[[2, 0]]]], "dkraus": [[[[0, 0]]]]}"#);
    let out = bin().args(["qfi", "--channel"]).arg(&non_tp).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_information_is_a_domain_error() {
    let doc = write_doc("zero", r#"{"builtin": "depolarizing", "params": {"px": 0.4, "py": 0.4, "pz": 0.1}}"#);
    let out = bin().args(["code", "--channel"]).arg(&doc).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_writes_csv_tables() {
    let dir = scratch("sweep");
    let out = bin().args(["sweep", "--preset", "fig4", "--points", "11", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["fig4_p0.5.csv", "fig4_p0.001.csv"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "delta,ratio_0.9delta,ratio_0.5delta,ratio_0.1delta,ratio_limit");
        assert_eq!(lines.count(), 11);
    }
    let out = bin().args(["sweep", "--preset", "fig3", "--points", "11", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.join("fig3.csv")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("0.36,0.36,0.1,")));
}

#[test]
fn verify_passes() {
    let out = bin().args(["verify", "--json", "--seed", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v = json_out(&out);
    assert_eq!(v["failed"], 0);
    assert_eq!(v["seed"], 3);
}

#[test]
fn tolerance_flags_and_environment() {
    let doc = write_doc("tol", r#"{"builtin": "dephasing", "params": {"p": 0.2}}"#);
    let out = bin()
        .args(["hnks", "--tol-hnks", "1e-6", "--channel"])
        .arg(&doc)
        .env("CHANNEL_QFI_SDP_MAX_ITER", "150")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json_out(&out);
    assert_eq!(v["tolerances"]["hnks"], 1e-6);
    assert_eq!(v["tolerances"]["sdp_max_iter"], 150);
}
