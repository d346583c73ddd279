use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmrm_cli::svg;
use mmrm_core::dgp::simulate_trial;
use mmrm_core::harness::read_results_csv;
use mmrm_core::{Dataset, DropoutKind, ReplicationKey, ScenarioConfig};
use serde_json::Value;

fn mmrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmrm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_dataset(dir: &Path, name: &str, cfg: &ScenarioConfig) -> PathBuf {
    let ds: Dataset = simulate_trial(cfg, ReplicationKey::new(cfg.seed, 0)).unwrap();
    let path = dir.join(name);
    ds.write_csv(fs::File::create(&path).unwrap()).unwrap();
    path
}

fn fit_json(data: &Path, extra: &[&str]) -> (Output, Value) {
    let mut args = vec!["fit", path_str(data)];
    args.extend_from_slice(extra);
    let out = mmrm(&args);
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out, json)
}

fn mcar_trial(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n: 200,
        delta: 0.2,
        dropout_kind: DropoutKind::Mcar,
        seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn fit_prints_estimate_and_test() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "trial.csv", &mcar_trial(1));
    for model in ["ancova", "mmrm", "mmrmx"] {
        let (out, json) = fit_json(&data, &["--model", model]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let tau = json["tau_J"].as_f64().unwrap();
        let se = json["se_tau_J"].as_f64().unwrap();
        let p = json["p_value"].as_f64().unwrap();
        assert!(tau.is_finite() && se > 0.0 && (0.0..=1.0).contains(&p));
        assert_eq!(json["converged"], Value::Bool(true));
    }
}

#[test]
fn single_timepoint_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig {
        j: 1,
        alpha: vec![0.0],
        tau: vec![1.0 / 3.0],
        n: 150,
        seed: 2,
        ..ScenarioConfig::default()
    };
    let data = write_dataset(dir.path(), "one.csv", &cfg);
    let (_, a) = fit_json(&data, &["--model", "ancova"]);
    let (_, m) = fit_json(&data, &["--model", "mmrm"]);
    for key in ["tau_J", "se_tau_J", "p_value"] {
        let (x, y) = (a[key].as_f64().unwrap(), m[key].as_f64().unwrap());
        assert!((x - y).abs() < 1e-8, "{key}: {x} vs {y}");
    }
}

#[test]
fn non_monotone_missingness_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "full.csv", &ScenarioConfig { n: 50, ..ScenarioConfig::default() });
    let text = fs::read_to_string(&data).unwrap();
    let mut blanked = false;
    let edited: Vec<String> = text
        .lines()
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if !blanked && fields[fields.len() - 2] == "2" {
                blanked = true;
                let keep = &fields[..fields.len() - 1];
                format!("{},", keep.join(","))
            } else {
                line.to_string()
            }
        })
        .collect();
    fs::write(&data, edited.join("\n") + "\n").unwrap();
    let out = mmrm(&["fit", path_str(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NonMonotoneMissingness"));
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "trial.csv", &mcar_trial(3));
    let (out, json) = fit_json(&data, &["--model", "mmrm", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json["converged"], Value::Bool(false));
}

#[test]
fn malformed_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "subject_id,treatment,x1,time,y\n1,2,0.5,1,0.1\n").unwrap();
    let out = mmrm(&["fit", path_str(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("treatment"));
}

const CONFIG: &str = r#"[
  {"rho": 0.6, "delta": 0.2, "dropout_kind": "mcar", "n_reps": 20, "seed": 5},
  {"rho": 0.0, "b": 0.8, "delta": 0.2, "dropout_kind": "mar", "tau": [0, 0, 0], "n_reps": 20, "seed": 6}
]"#;

#[test]
fn simulate_writes_one_row_per_scenario_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.json");
    fs::write(&config, CONFIG).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = mmrm(&["simulate", "--config", path_str(&config), "--out", path_str(&out), "--workers", "2"]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(out).unwrap()
    };
    let first = run("a.csv");
    let rows = read_results_csv(first.as_slice()).unwrap();
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows.iter().all(|r| r.n_reps == 20));
    assert_eq!(first, run("b.csv"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    let out_path = dir.path().join("out.csv");
    fs::write(&config, r#"{"rho": 1.0}"#).unwrap();
    let out = mmrm(&["simulate", "--config", path_str(&config), "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
    assert!(!out_path.exists());

    fs::write(&config, r#"{"rho": 0.5,"#).unwrap();
    let out = mmrm(&["simulate", "--config", path_str(&config), "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn reproduce_writes_csv_and_matching_figure() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, stem, chart) in [
        ("reproduce-power", "power", svg::POWER_CHART),
        ("reproduce-error", "type1", svg::TYPE1_CHART),
    ] {
        let out = mmrm(&[cmd, "--out", path_str(dir.path()), "--reps", "3", "--workers", "2"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = fs::read(dir.path().join(format!("{stem}.csv"))).unwrap();
        let rows = read_results_csv(csv.as_slice()).unwrap();
        assert_eq!(rows.len(), 48 * 3);
        let figure = fs::read_to_string(dir.path().join(format!("{stem}.svg"))).unwrap();
        assert_eq!(figure, svg::render(&rows, &chart));
    }
}

#[test]
fn asymptotics_reports_json() {
    let out = mmrm(&["asymptotics", "--n", "100000", "--rho", "0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["passes"].is_boolean());
    assert!(json["report"]["beta_interact_discrepancy"].as_f64().is_some());
}
