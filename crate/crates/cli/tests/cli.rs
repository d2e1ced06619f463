use std::process::{Command, Output};

use weyl_semigroup_cli::config::{CommandKind, RunConfig};

const HARMONIC: &str = r#"{"variant":"nearest_neighbor","sites":[[0]],"f":{"name":"quadratic"}}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weyl-semigroup")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn linf_on_zero_potential_passes() {
    let cfg = r#"{"potential":{"variant":"zero","n_sites":2},"n_probes":4,"estimator":{"n_paths":1024,"n_steps":1}}"#;
    let o = run(&["verify", "linf", "--config", cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["result"]["violation"], false);
    assert_eq!(doc["config"]["suite"], "linf");
}

#[test]
fn malformed_config_names_the_field() {
    let o = run(&["bound", "--config", r#"{"alpha":"0:1","beta":"0:1","m":"one","t":0.5,"c_m":1}"#]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("'m'"), "{}", stderr(&o));

    let o = run(&["estimate", "--config", r#"{"potential":{"variant":"zero","n_sites":1},"points":[],"t":[1],"n_pahts":3}"#]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_pahts"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["verify", "nonsense", "--config", "{}"]).status.code(), Some(1));
    assert_eq!(run(&["estimate"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--config", "/nonexistent/config.json"]).status.code(), Some(1));
}

#[test]
fn l1_on_free_field_is_a_numerical_failure() {
    let cfg = r#"{"potential":{"variant":"zero","n_sites":1},"grid":{"half_width":10,"n_grid":256}}"#;
    let o = run(&["verify", "l1", "--config", cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("divergent"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let csv = dir.path().join("out.csv");
    let cfg = format!(r#"{{"potential":{HARMONIC},"t":0.5,"grid":{{"half_width":10,"n_grid":128}}}}"#);
    let o = run(&["oracle", "--config", &cfg, "--out", out.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let echoed = doc["config"].to_string();
    assert_eq!(doc["config"]["grid"]["roi"], 5.0);
    let first = RunConfig::parse(CommandKind::Oracle, &echoed).unwrap();
    let second = RunConfig::parse(CommandKind::Oracle, &serde_json::to_string(&first).unwrap()).unwrap();
    assert_eq!(first, second);
    assert!(RunConfig::parse(CommandKind::Bound, &echoed).is_err());

    let o2 = run(&["oracle", "--config", &echoed]);
    assert_eq!(o2.stdout, std::fs::read(&out).unwrap());
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("x0,xi0,re,im\n"));
}

#[test]
fn bound_certifies_c_m_from_a_potential() {
    let cfg = r#"{"alpha":"0:1","beta":"","m":1,"t":0.5,
        "potential":{"variant":"mean_field","n_sites":3,"g":{"name":"gaussian_bump"}}}"#;
    let o = run(&["bound", "--config", cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let c_m = doc["result"]["c_m"].as_f64().unwrap();
    let bound = doc["result"]["bound"].as_f64().unwrap();
    assert!((bound - (0.5 * c_m).exp()).abs() < 1e-12 * bound);
}
