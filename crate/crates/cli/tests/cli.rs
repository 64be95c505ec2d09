use std::path::PathBuf;
use std::process::{Command, Output};

fn rlattice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlattice"))
        .args(args)
        .env_remove("RLATTICE_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn construct_small_example() {
    let v = json(&rlattice(&["construct", "--M", "10", "--d", "2", "--gamma", "1,0.5", "--seed", "42"]));
    assert_eq!(v["N"], 7);
    assert_eq!(v["z"], serde_json::json!([1, 3]));
    assert_eq!(v["candidate_set_sizes"], serde_json::json!([1, 3]));
    for m in v["bound_margins"].as_array().unwrap() {
        assert!(m.as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["construct", "--M", "2", "--d", "2", "--gamma", "1,0.5", "--seed", "1"][..],
        &["construct", "--M", "10", "--d", "3", "--gamma", "1,0.5", "--seed", "1"],
        &["construct", "--M", "10", "--d", "2", "--gamma", "1,0.5", "--seed", "1", "--tau", "1.2"],
        &["lowerbound", "--M", "10", "--alpha", "0.4", "--gamma", "1,1"],
    ] {
        assert_eq!(rlattice(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn approximate_recovers_polynomial() {
    let path = scratch("poly.json");
    std::fs::write(
        &path,
        r#"{"dim": 2, "terms": [{"h": [0, 0], "re": 1.0, "im": 0.0}, {"h": [1, -1], "re": 0.0, "im": 0.5}]}"#,
    )
    .unwrap();
    let out = rlattice(&[
        "approximate", "--fn", path.to_str().unwrap(), "--M", "200", "--d", "2", "--gamma", "1,1", "--T", "4",
        "--seed", "5", "--exact-error",
    ]);
    let v = json(&out);
    assert!(v["exact_sq_error"].as_f64().unwrap() < 1e-24);
}

#[test]
fn lowerbound_value() {
    let out = rlattice(&["lowerbound", "--M", "100", "--alpha", "1", "--gamma", "1,0.5"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let expected = 2f64.sqrt() * 0.5 / (3.0 * 100f64.powf(1.0));
    assert!((v - expected).abs() <= 1e-15 * expected);
}

#[test]
fn omega_and_selftest_succeed() {
    let out = rlattice(&["omega", "--M", "10", "--radius", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().lines().count() > 1);
    let out = rlattice(&["selftest"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["convergence", "--M-list", "16,32", "--alpha", "1", "--gamma", "1,0.5", "--kernel", "--kernel-radius", "8", "--lambda", "0.9", "--beta", "0.3", "--trials", "8", "--seed", "3"];
    let one = rlattice(&[&["--threads", "1"][..], &args].concat());
    let four = rlattice(&[&["--threads", "4"][..], &args].concat());
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, four.stdout);
}
