use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walshdiv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn classify_explicit_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["seq", "classify", "--terms", "5,21,85"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["nested"], true);
    assert_eq!(v["variation_profile"], serde_json::json!([4, 6, 8]));
}

#[test]
fn kernel_table_is_all_ok() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernel", "--n-max", "300", "--out", "kernels.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("kernels.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,V,norm_num,norm_den,lower_ok,upper_ok"));
    assert_eq!(lines.next(), Some("1,2,1,1,true,true"));
    assert!(text.lines().skip(1).all(|l| l.ends_with("true,true")));
    assert_eq!(text.lines().count(), 301);
    assert!(String::from_utf8_lossy(&out.stdout).contains("kernel-sandwich  pass"));
}

#[test]
fn lemma1_artifact_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["lemma1", "--nu", "1", "--out", "art.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("art.json"));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["m"], 3);
    assert_eq!(v["deltas"].as_array().unwrap().len(), 8);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["verdict"] == "pass"));
    let cells = v["exceptional_set"]["cells"].as_array().unwrap();
    assert!(cells.iter().all(|c| c["any"]["at_least_quarter"] == true));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"n_max": 40, "out": "from_config.csv"}"#).unwrap();
    let out = run(&["--config", "c.json", "kernel", "--n-max", "20"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("from_config.csv")).unwrap();
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn invalid_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"colour": "red"}"#).unwrap();
    for args in [
        vec!["--config", "bad.json", "kernel"],
        vec!["lemma1", "--nu", "0", "--out", "a.json"],
        vec!["seq", "gen", "--seq", "fibonacci"],
        vec!["kernel", "--n-max", "10", "--resolution", "2"],
        vec!["witness", "--phi", "cubic"],
        vec!["frobnicate"],
    ] {
        let out = run(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert!(!dir.path().join("a.json").exists());
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["witness", "--samples", "0", "--out", "w.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("witness-fraction"));
}

#[test]
fn seq_gen_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["seq", "gen", "--start", "0", "--count", "3", "--format", "csv"], dir.path());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "position,n,variation\n1,1,2\n2,5,4\n3,21,6\n");
}
