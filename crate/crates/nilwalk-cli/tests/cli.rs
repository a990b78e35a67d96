use nilwalk_cli::config::ExperimentConfig;
use nilwalk_cli::scenario::{scenario, ScenarioError, SCENARIO_NAMES};
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nilwalk"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_round_trips() {
    let text = r#"{
        "scenario": "heisenberg-sl2",
        "params": { "m": 12, "trials": 500, "seed": 9, "start": ["1/2", "0", "0"] },
        "out": "somewhere"
    }"#;
    let cfg = ExperimentConfig::from_str(text).unwrap();
    let again = ExperimentConfig::from_str(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentConfig::from_str(r#"{"scenario": "x", "bogus": 1}"#).is_err());
    assert!(ExperimentConfig::from_str(r#"{"scenario": "x", "params": {"wat": 2}}"#).is_err());
}

#[test]
fn inline_schema_and_measure_round_trip() {
    let text = r#"{
        "schema": { "family": "torus", "n": 2 },
        "measure": [
            { "automorphism": { "kind": "torus", "A": { "rows": 2, "cols": 2, "data": [2, 1, 1, 1] } },
              "translation": ["0", "0"], "weight": "1" }
        ]
    }"#;
    let cfg = ExperimentConfig::from_str(text).unwrap();
    let again = ExperimentConfig::from_str(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn registry_measures_validate() {
    for (name, _) in SCENARIO_NAMES {
        match scenario(name, 2) {
            Ok(d) => {
                d.schema.validate().unwrap();
                d.measure.validate(&d.schema).unwrap();
            }
            Err(ScenarioError::OutOfScope(n, _)) => assert_eq!(*name, n),
            Err(e) => panic!("scenario {name}: {e}"),
        }
    }
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    assert!(matches!(scenario("nope", 2), Err(ScenarioError::Unknown(_))));
}

#[test]
fn walk_writes_stamped_artifacts() {
    let dir = tempdir("stamped");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"scenario": "bflm-torus", "params": {"m": 4, "trials": 50, "seed": 5}}"#,
    );
    let out = dir.join("out");
    let status = bin()
        .args(["walk", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let hash = ExperimentConfig::from_str(&fs::read_to_string(&cfg).unwrap())
        .unwrap()
        .hash();
    let csv = fs::read_to_string(out.join("walk.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={hash}")));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("walk.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], serde_json::json!(hash));
}

#[test]
fn identical_configs_give_bit_identical_outputs() {
    let dir = tempdir("identical");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"scenario": "bflm-torus", "params": {"m": 6, "trials": 200, "seed": 11}}"#,
    );
    for out in ["a", "b"] {
        let status = bin()
            .args(["walk", "--config", &cfg, "--out", dir.join(out).to_str().unwrap()])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(
        fs::read(dir.join("a/walk.csv")).unwrap(),
        fs::read(dir.join("b/walk.csv")).unwrap()
    );
}

#[test]
fn exit_codes_distinguish_usage_and_analytic_failures() {
    let dir = tempdir("exit-codes");
    // usage: config file missing
    let status = bin().args(["walk", "--config", "/no/such/file.json"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // usage: unknown key
    let bad = write_config(&dir, "bad.json", r#"{"scenario": "bflm-torus", "nope": 1}"#);
    let status = bin().args(["walk", "--config", &bad]).status().unwrap();
    assert_eq!(status.code(), Some(1));
    // analytic: registered but out-of-scope scenario
    let nf = write_config(&dir, "nf.json", r#"{"scenario": "heisenberg-nf"}"#);
    let out = bin()
        .args(["walk", "--config", &nf, "--out", dir.join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(body["kind"], serde_json::json!("analytic"));
    // analytic: arithmetic-only scenario refuses equidistribution commands
    let f2 = write_config(&dir, "f2.json", r#"{"scenario": "free-2step"}"#);
    let status = bin()
        .args(["tau", "--config", &f2, "--out", dir.join("o").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    // ...but permits plain walks
    let status = bin()
        .args(["walk", "--config", &f2, "--out", dir.join("o").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn scenario_list_names_every_registered_scenario() {
    let dir = tempdir("list");
    let out = bin()
        .args(["scenario", "list", "--out", dir.join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let listed: Vec<&str> = body["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    for (name, _) in SCENARIO_NAMES {
        assert!(listed.contains(name), "{name} missing from listing");
    }
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("nilwalk-cli-test-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}
