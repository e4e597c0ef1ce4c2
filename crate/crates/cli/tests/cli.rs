use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn rwdrift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwdrift")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rwdrift-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const COUNTEREXAMPLE: &str =
    r#"{"factors":[{"kind":"cyclic","order":3,"law":[0.5,0.5]},{"kind":"cyclic","order":2,"law":[1.0]}],"alpha":[0.5,0.5]}"#;

#[test]
fn free_exact_uniform_values() {
    let doc = json(&rwdrift(&["free-exact", "--d", "2", "--p", "0.25,0.25,0.25,0.25"]));
    let report = &doc["result"]["report"];
    assert!((report["drift"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((report["entropy"].as_f64().unwrap() - 0.5 * 3f64.ln()).abs() < 1e-12);
    assert_eq!(doc["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["config"]["command"], "free-exact");
}

#[test]
fn symmetric_input_reports_closed_forms() {
    let doc = json(&rwdrift(&["free-exact", "--q-sym", "0.2,0.3"]));
    let sym = &doc["result"]["symmetric"];
    let report = &doc["result"]["report"];
    assert!((sym["drift"].as_f64().unwrap() - report["drift"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn rank_one_reports_absolute_bias() {
    let doc = json(&rwdrift(&["free-exact", "--p", "0.7,0.3"]));
    assert!((doc["result"]["report"]["drift"].as_f64().unwrap() - 0.4).abs() < 1e-15);
    assert_eq!(rwdrift(&["free-exact", "--p", "0.5,0.5"]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_two() {
    for args in [
        &["free-exact", "--p", "0.3,0.3,0.3,0.3"][..],
        &["free-exact", "--d", "3", "--p", "0.25,0.25,0.25,0.25"],
        &["free-exact", "--d", "2", "--format", "csv"],
        &["optimize"],
        &["no-such-command"],
    ] {
        assert_eq!(rwdrift(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn green_functional_on_free_product_is_rejected() {
    let spec = scratch("spec-green.json");
    std::fs::write(&spec, COUNTEREXAMPLE).unwrap();
    let out = rwdrift(&["simulate", "--spec", spec.to_str().unwrap(), "--functional", "green", "--n", "5", "--samples", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn memory_cap_exits_three() {
    let out = Command::new(env!("CARGO_BIN_EXE_rwdrift"))
        .args(["convolve", "--d", "3", "--n", "12"])
        .env("RWDRIFT_MEM_CAP_MB", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verification_breach_exits_four() {
    // One step cannot separate the two block drifts.
    let out = rwdrift(&["verify", "--preset", "z3-z2-counterexample", "--n", "1", "--samples", "4"]);
    assert_eq!(out.status.code(), Some(4));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["result"]["passed"], false);
}

#[test]
fn counterexample_preset_passes() {
    let doc = json(&rwdrift(&["verify", "--preset", "z3-z2-counterexample", "--n", "2000", "--samples", "2000"]));
    assert_eq!(doc["result"]["passed"], true);
}

#[test]
fn rank_one_sweep_csv() {
    let out = rwdrift(&["sweep", "--d", "1", "--from", "0.3", "--to", "0.7", "--grid", "81", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "t,drift,entropy,d1_drift,d2_drift,kink_flag");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 81);
    let flagged: Vec<f64> = rows.iter().filter(|r| r[5] == "true").map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(flagged, vec![0.5]);
    assert!(text.starts_with("# rwdrift "));
}

#[test]
fn output_reproduces_from_its_echo() {
    let first = rwdrift(&["simulate", "--d", "2", "--n", "200", "--samples", "300", "--seed", "9"]);
    let path = scratch("echo.json");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = rwdrift(&["free-exact", "--config", path.to_str().unwrap()]);
    assert_eq!(json(&first), json(&second));
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |t: &str| rwdrift(&["simulate", "--p", "0.4,0.2,0.3,0.1", "--n", "300", "--samples", "500", "--threads", t]);
    let (a, b) = (json(&run("1")), json(&run("3")));
    assert_eq!(a["result"], b["result"]);
}

#[test]
fn free_product_from_spec_file() {
    let spec = scratch("spec.json");
    std::fs::write(&spec, COUNTEREXAMPLE).unwrap();
    let doc = json(&rwdrift(&["free-product", "--spec", spec.to_str().unwrap()]));
    let l = doc["result"]["block_drift"]["l_block"].as_f64().unwrap();
    assert!((l - 1.0 / 7.0).abs() < 1e-9);
    assert_eq!(doc["config"]["product"]["alpha"][0], 0.5);
}

#[test]
fn output_file_and_convolution_rows() {
    let path = scratch("conv.json");
    let out = rwdrift(&["convolve", "--d", "2", "--n", "4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let rows = doc["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    // p^(2)(e) = 1/4 for the uniform law on F_2.
    assert!((rows[2]["return_prob"].as_f64().unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn optimize_and_concavity_run() {
    let doc = json(&rwdrift(&["optimize", "--d", "2", "--starts", "3"]));
    for x in doc["result"]["argmax"].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 0.25).abs() < 1e-6);
    }
    let doc = json(&rwdrift(&["concavity", "--d", "2", "--chords", "50"]));
    assert_eq!(doc["result"]["violations"].as_array().unwrap().len(), 0);
}
