use std::fs;
use std::path::{Path, PathBuf};

use scbf::config::{parse_config, parse_config_str, FieldSpec};
use scbf::integrator::bernoulli_amplitude;
use scbf::operators::CbfParameters;
use scbf::orchestrator::{exit_status, run, Command, ExperimentSpec};
use scbf::Error;
use serde_json::Value;
use tempfile::TempDir;

const BELTRAMI: &str = r#"{
    "domain": {"dim": 3, "N": 8},
    "params": {"mu": 1.0, "beta": 1.0, "r": 3.0},
    "initial": {"type": "beltrami", "amplitude": 1.0},
    "time": {"T": 1.0, "dt": 0.001, "record_every": 50}
}"#;

const NOISY: &str = r#"{
    "domain": {"dim": 2, "N": 8},
    "params": {"mu": 1.0, "beta": 1.0, "r": 3.0},
    "initial": {"type": "random", "amplitude": 1.0, "decay": 2.0, "seed": 3},
    "noise": {"family": "linear_multiplicative", "atoms": [{"z": 1.0, "weight": 0.5}, {"z": -1.0, "weight": 0.5}],
              "rate": 4.0, "sigma": 0.2},
    "time": {"T": 0.5, "dt": 0.01, "record_every": 5},
    "ensemble": {"paths": 4, "seed": 9}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn spec(command: Command, config: &Path, out: &Path, threads: Option<usize>) -> ExperimentSpec {
    ExperimentSpec {
        command,
        config: config.to_path_buf(),
        out: out.to_path_buf(),
        seed: None,
        threads,
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn minimal_config_fills_documented_defaults() {
    let text = r#"{"domain": {"dim": 2, "N": 16}, "params": {"mu": 2.0, "beta": 0.5, "r": 4.0},
                   "time": {"T": 2.0, "dt": 0.05}}"#;
    let cfg = parse_config_str(text).unwrap().resolve().unwrap();
    let v = serde_json::to_value(&cfg).unwrap();
    assert_eq!(v["domain"]["oversample"], 4);
    assert_eq!(v["domain"]["galerkin_modes"], 8);
    assert_eq!(v["time"]["record_every"], 1);
    assert_eq!(v["ensemble"]["paths"], 1);
    assert_eq!(v["ensemble"]["seed"], 0);
    assert_eq!(v["forcing"]["type"], "zero");
    assert_eq!(v["initial"]["type"], "zero");
    let x = &v["experiment"];
    for key in [
        "fuzz_cases",
        "identity_exponents",
        "stationary_tol",
        "uniqueness_inits",
        "mode",
        "tolerance",
        "window",
        "epsilon",
        "required_fraction",
        "slack",
        "observables",
        "burn_in",
        "cap",
        "count_samples",
        "alpha",
    ] {
        assert!(!x[key].is_null(), "{key} missing");
    }
    assert_eq!(x["fuzz_cases"], 1000);
    // η = 1/27, θ = μ − 2η
    assert!((x["epsilon"].as_f64().unwrap() - 26.0 / 27.0).abs() < 1e-15);
    assert_eq!(cfg.build().unwrap().steps(), 40);
}

#[test]
fn malformed_and_unknown_keys_report_position() {
    match parse_config_str("{\n \"domain\": {\"dim\": 2}\n \"params\": {}\n}") {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 21)),
        other => panic!("{other:?}"),
    }
    let text = BELTRAMI.replace("\"record_every\"", "\"every\"");
    match parse_config_str(&text) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 5);
            assert!(message.contains("every"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn relative_field_paths_follow_config_directory() {
    let dir = TempDir::new().unwrap();
    let text = BELTRAMI.replace(
        r#"{"type": "beltrami", "amplitude": 1.0}"#,
        r#"{"type": "file", "path": "u0.json"}"#,
    );
    let path = write_config(dir.path(), &text);
    let cfg = parse_config(&path).unwrap();
    assert_eq!(cfg.initial, FieldSpec::File { path: dir.path().join("u0.json") });
    assert!(matches!(parse_config(&dir.path().join("missing.json")), Err(Error::Config(_))));
}

#[test]
fn critical_exponent_below_threshold_fails_with_condition() {
    let dir = TempDir::new().unwrap();
    let text = BELTRAMI.replace("\"mu\": 1.0", "\"mu\": 0.4");
    let config = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let result = run(&spec(Command::VerifyOperators, &config, &out, Some(1)));
    match &result {
        Err(Error::Admissibility { condition, .. }) => assert!(condition.contains("2βμ ≥ 1"), "{condition}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(exit_status(&result), 2);
    let failure = read_json(&out.join("failure.json"));
    assert_eq!(failure["kind"], "admissibility");
    assert_eq!(failure["command"], "verify-operators");
    assert!(failure["condition"].as_str().unwrap().contains("2βμ ≥ 1"));
    assert!(!out.join("verdict.json").exists());
}

#[test]
fn parse_failure_is_recorded_with_position() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "{\n  \"domain\": [\n");
    let out = dir.path().join("out");
    let result = run(&spec(Command::Simulate, &config, &out, None));
    assert_eq!(exit_status(&result), 2);
    let failure = read_json(&out.join("failure.json"));
    assert_eq!(failure["kind"], "parse");
    assert!(failure["line"].as_u64().unwrap() >= 2);
    assert!(failure["column"].is_u64());
}

#[test]
fn verify_operators_writes_all_fuzz_cases() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"domain": {"dim": 2, "N": 8}, "params": {"mu": 1.0, "beta": 1.0, "r": 4.0},
                   "time": {"T": 1.0, "dt": 0.01}}"#;
    let config = write_config(dir.path(), text);
    let out = dir.path().join("out");
    let outcome = run(&spec(Command::VerifyOperators, &config, &out, None)).unwrap();
    assert!(outcome.passed, "{}", outcome.verdict);
    let cases = read_json(&out.join("fuzz.json"));
    let cases = cases.as_array().unwrap();
    assert_eq!(cases.len(), 1000);
    assert!(cases.iter().all(|c| c["passed"] == true));
    assert_eq!(read_json(&out.join("fuzz_c.json")).as_array().unwrap().len(), 1000);
    assert_eq!(outcome.verdict["monotonicity_passed"], 1000);
    let verdict = read_json(&out.join("verdict.json"));
    assert_eq!(verdict["passed"], true);
    assert_eq!(verdict["command"], "verify-operators");
}

#[test]
fn beltrami_simulation_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), BELTRAMI);
    let out = dir.path().join("out");
    let outcome = run(&spec(Command::Simulate, &config, &out, Some(2))).unwrap();
    assert!(outcome.passed, "{}", outcome.verdict);
    assert!(!out.join("jumps_0000.csv").exists());

    let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();
    let scale = (8.0 * std::f64::consts::PI.powi(3)).sqrt();
    let text = fs::read_to_string(out.join("oracle.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,norm_H,oracle_norm_H,rel_error"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21);
    for row in &rows {
        let exact = scale * bernoulli_amplitude(1.0, &p, row[0]);
        assert!((row[2] - exact).abs() <= 1e-12 * exact);
        assert!((row[1] - exact).abs() <= 1e-3 * exact, "{row:?}");
    }
    let traj = fs::read_to_string(out.join("trajectory_0000.csv")).unwrap();
    assert_eq!(traj.lines().count(), 22);
}

#[test]
fn manifest_records_resolved_config_and_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), NOISY);
    let out = dir.path().join("out");
    let mut s = spec(Command::Simulate, &config, &out, Some(1));
    s.seed = Some(77);
    run(&s).unwrap();
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 77);
    assert_eq!(m["command"], "simulate");
    assert!(m["artifact"].is_string());
    assert!(m["version"].is_string());
    assert_eq!(m["config"]["ensemble"]["seed"], 77);
    assert_eq!(m["config"]["domain"]["galerkin_modes"], 4);
    assert_eq!(m["config"]["experiment"]["fuzz_cases"], 1000);

    // the manifest config replays to the same outputs
    let replay = dir.path().join("replay.json");
    fs::write(&replay, serde_json::to_string(&m["config"]).unwrap()).unwrap();
    let out2 = dir.path().join("out2");
    run(&spec(Command::Simulate, &replay, &out2, Some(3))).unwrap();
    assert_eq!(csv_files(&out), csv_files(&out2));
}

#[test]
fn reruns_are_byte_identical_across_parallelism() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), NOISY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    run(&spec(Command::Simulate, &config, &a, Some(1))).unwrap();
    run(&spec(Command::Simulate, &config, &b, Some(8))).unwrap();
    run(&spec(Command::Simulate, &config, &c, Some(1))).unwrap();
    let files = csv_files(&a);
    assert_eq!(files.len(), 8);
    assert_eq!(files, csv_files(&b));
    assert_eq!(files, csv_files(&c));
    assert_eq!(fs::read(a.join("ledger.json")).unwrap(), fs::read(b.join("ledger.json")).unwrap());

    let mut s = spec(Command::Simulate, &config, &dir.path().join("d"), Some(1));
    s.seed = Some(10);
    run(&s).unwrap();
    assert_ne!(files, csv_files(&dir.path().join("d")));
}

#[test]
fn isometry_needs_noise() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), BELTRAMI);
    let out = dir.path().join("out");
    let result = run(&spec(Command::Isometry, &config, &out, None));
    assert!(matches!(result, Err(Error::Config(_))));
    assert_eq!(read_json(&out.join("failure.json"))["kind"], "config");
}

#[test]
fn failing_bound_exits_with_one() {
    let dir = TempDir::new().unwrap();
    // dt far too coarse for the 1e-3 oracle tolerance
    let text = BELTRAMI.replace("\"dt\": 0.001, \"record_every\": 50", "\"dt\": 0.25, \"record_every\": 1");
    let config = write_config(dir.path(), &text);
    let result = run(&spec(Command::Simulate, &config, &dir.path().join("out"), None));
    let outcome = result.as_ref().unwrap();
    assert!(!outcome.passed);
    assert_eq!(exit_status(&result), 1);
    assert_eq!(read_json(&dir.path().join("out/verdict.json"))["passed"], false);
}
