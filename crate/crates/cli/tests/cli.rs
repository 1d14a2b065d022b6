use std::process::Command;

fn skewlab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_skewlab"));
    c.env_remove("SKEWLAB_OUT_DIR");
    c
}

#[test]
fn maps_eval_prints_image() {
    let out = skewlab().args(["maps", "eval", "--family", "standard", "--r", "100", "--point", "1,2"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let img = v["image"].as_array().unwrap();
    assert!((img[1].as_f64().unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn passing_run_exits_zero_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = skewlab()
        .args(["reproduce", "shift", "--n", "20000", "--seeds", "0..2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("shift.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().nth(1), Some("seed,exponent_index,value"));
    assert!(dir.path().join("shift.json").exists());
}

#[test]
fn failing_checks_exit_one() {
    // r = 2 is far below the regime where the NUH bound holds
    let dir = tempfile::tempdir().unwrap();
    let out = skewlab().args(["reproduce", "nuhd", "--r", "2", "--n", "5000", "--seeds", "0"]).env("SKEWLAB_OUT_DIR", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_input_exits_two() {
    let out = skewlab().args(["reproduce", "nonexistent"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = skewlab().args(["maps", "eval", "--point", "1,x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
