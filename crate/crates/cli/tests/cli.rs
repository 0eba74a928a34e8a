use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fairtransport::ingest::load_csv;
use fairtransport::policy::sigmoid;
use fairtransport::simulate::{synthetic_credit_csv, synthetic_credit_schema};
use fairtransport::{FeatureRole, Policy};
use serde_json::Value;
use tempfile::TempDir;

const XY_SCHEMA: &str = r#"{
  "columns": [
    {"name": "x", "kind": "numeric", "role": "actionable"},
    {"name": "y", "kind": "categorical", "is_label": true}
  ],
  "label_positive_value": "1"
}"#;

const XGY_SCHEMA: &str = r#"{
  "columns": [
    {"name": "x", "kind": "numeric", "role": "actionable"},
    {"name": "grp", "kind": "categorical", "role": "immutable", "is_group": true},
    {"name": "y", "kind": "categorical", "is_label": true}
  ],
  "label_positive_value": "1"
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairtransport"))
}

fn put(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn policy_file(dir: &Path, name: &str, weights: Vec<f64>, intercept: f64) {
    put(dir, name, &Policy::new(weights, intercept).to_json().unwrap());
}

fn run(sub: &str, config: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

#[test]
fn identical_population_and_policy_are_at_distance_zero() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "schema.json", XY_SCHEMA);
    put(dir.path(), "a.csv", "x,y\n0.1,0\n0.7,1\n-0.3,0\n1.5,1\n0.2,1\n");
    policy_file(dir.path(), "p.json", vec![1.3], -0.2);
    let cfg = put(
        dir.path(),
        "audit.json",
        r#"{"population_a": {"data": "a.csv", "schema": "schema.json"},
            "policy_a": {"source": "load", "path": "p.json"},
            "output_dir": "out"}"#,
    );
    let out = run("distance", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/distance.json"));
    assert!(report["wasserstein"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(report["n_a"], 5);
    let coupling = fs::read_to_string(dir.path().join("out/coupling.csv")).unwrap();
    assert!(coupling.starts_with("i,j,mass\n"));
}

#[test]
fn two_by_two_distance_matches_hand_solved_program() {
    // Both files hold x = -1, 1, so the joint standardization leaves x unchanged.
    let dir = TempDir::new().unwrap();
    put(dir.path(), "schema.json", XY_SCHEMA);
    put(dir.path(), "a.csv", "x,y\n-1,0\n1,1\n");
    put(dir.path(), "b.csv", "x,y\n-1,0\n1,1\n");
    policy_file(dir.path(), "pa.json", vec![1.0], 0.0);
    policy_file(dir.path(), "pb.json", vec![-3.0], 0.5);
    let cfg = put(
        dir.path(),
        "audit.json",
        r#"{"population_a": {"data": "a.csv", "schema": "schema.json"},
            "population_b": {"data": "b.csv", "schema": "schema.json"},
            "policy_a": {"source": "load", "path": "pa.json"},
            "policy_b": {"source": "load", "path": "pb.json"},
            "output_dir": "out"}"#,
    );
    let out = run("distance", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let pa = [sigmoid(-1.0), sigmoid(1.0)];
    let pb = [sigmoid(3.5), sigmoid(-2.5)];
    // Squared distance between (1-p, p) and (1-q, q) is 2 (p - q)^2.
    let c = |i: usize, j: usize| 2.0 * (pa[i] - pb[j]).powi(2);
    let identity = 0.5 * (c(0, 0) + c(1, 1));
    let swap = 0.5 * (c(0, 1) + c(1, 0));
    let expected = identity.min(swap);

    let report = json(dir.path().join("out/distance.json"));
    assert!((report["objective"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((report["wasserstein"].as_f64().unwrap() - expected.sqrt()).abs() < 1e-12);
}

#[test]
fn single_group_partitions_give_one_by_one_matrices() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "schema.json", XY_SCHEMA);
    put(dir.path(), "a.csv", "x,y\n0.1,0\n0.7,1\n-0.3,0\n1.5,1\n");
    put(dir.path(), "b.csv", "x,y\n0.4,0\n-0.2,1\n2.0,1\n");
    let cfg = put(
        dir.path(),
        "audit.json",
        r#"{"population_a": {"data": "a.csv", "schema": "schema.json"},
            "population_b": {"data": "b.csv", "schema": "schema.json"},
            "output_dir": "out"}"#,
    );
    let out = run("bias", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/bias.json"));
    let shares = matrix(&report["mass_shares"]);
    let decomposition = matrix(&report["decomposition"]);
    assert_eq!(shares.len(), 1);
    assert_eq!(shares[0].len(), 1);
    assert!((shares[0][0] - 1.0).abs() < 1e-12);
    let total = report["group_bias"][0].as_f64().unwrap();
    assert!((decomposition[0][0] - total).abs() < 1e-12);
}

#[test]
fn swapped_groups_send_all_mass_off_diagonal() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "schema.json", XGY_SCHEMA);
    put(dir.path(), "a.csv", "x,grp,y\n-1,g,0\n1,h,1\n");
    put(dir.path(), "b.csv", "x,grp,y\n1,g,1\n-1,h,0\n");
    // Encoded columns: x, grp=g, grp=h. Only x is scored.
    policy_file(dir.path(), "p.json", vec![2.0, 0.0, 0.0], 0.0);
    let cfg = put(
        dir.path(),
        "audit.json",
        r#"{"population_a": {"data": "a.csv", "schema": "schema.json"},
            "population_b": {"data": "b.csv", "schema": "schema.json"},
            "policy_a": {"source": "load", "path": "p.json"},
            "policy_b": {"source": "load", "path": "p.json"},
            "partitions_a": [{"column": "grp"}],
            "output_dir": "out"}"#,
    );
    let out = run("bias", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/bias.json"));
    assert_eq!(report["groups_a"], serde_json::json!(["grp=g", "grp=h"]));
    let shares = matrix(&report["mass_shares"]);
    assert!((shares[0][1] - 1.0).abs() < 1e-12);
    assert!((shares[1][0] - 1.0).abs() < 1e-12);
    assert!(shares[0][0].abs() < 1e-12 && shares[1][1].abs() < 1e-12);
    let csv = fs::read_to_string(dir.path().join("out/bias_mass_shares.csv")).unwrap();
    assert!(csv.starts_with("group,grp=g,grp=h\n"));
}

#[test]
fn aligned_populations_keep_mass_inside_groups() {
    let dir = TempDir::new().unwrap();
    put(dir.path(), "schema.json", XGY_SCHEMA);
    put(dir.path(), "a.csv", "x,grp,y\n-1.5,g,0\n-0.5,g,0\n0.5,h,1\n1.5,h,1\n0.9,k,1\n");
    policy_file(dir.path(), "p.json", vec![1.0, 0.0, 0.0, 0.0], 0.0);
    let cfg = put(
        dir.path(),
        "audit.json",
        r#"{"population_a": {"data": "a.csv", "schema": "schema.json"},
            "policy_a": {"source": "load", "path": "p.json"},
            "partitions_a": [{"column": "grp"}],
            "output_dir": "out"}"#,
    );
    let out = run("bias", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/bias.json"));
    let shares = matrix(&report["mass_shares"]);
    for (g, row) in shares.iter().enumerate() {
        for (h, &s) in row.iter().enumerate() {
            let expected = if g == h { 1.0 } else { 0.0 };
            assert!((s - expected).abs() < 1e-12, "share[{g}][{h}] = {s}");
        }
    }
    for b in report["group_bias"].as_array().unwrap() {
        assert!(b.as_f64().unwrap().abs() < 1e-12);
    }
}

fn credit_fixture(dir: &Path, alphas: &str) -> PathBuf {
    put(dir, "credit.csv", &synthetic_credit_csv(240, 5));
    let schema = serde_json::to_string_pretty(&synthetic_credit_schema()).unwrap();
    put(dir, "credit_schema.json", &schema);
    put(
        dir,
        "audit.json",
        &format!(
            r#"{{"population_a": {{"data": "credit.csv", "schema": "credit_schema.json"}},
                "alphas": {alphas},
                "output_dir": "out"}}"#
        ),
    )
}

#[test]
fn recourse_at_alpha_zero_reclassifies_nobody() {
    let dir = TempDir::new().unwrap();
    let cfg = credit_fixture(dir.path(), "[0.5]");
    let out = run("recourse", &cfg, &["--alpha", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/recourse.json"));
    let alphas = report["alphas"].as_array().unwrap();
    assert_eq!(alphas.len(), 1);
    assert_eq!(alphas[0]["alpha"].as_f64().unwrap(), 0.0);
    assert_eq!(alphas[0]["reclassified_fraction"].as_f64().unwrap(), 0.0);
    let features = fs::read_to_string(dir.path().join("out/recourse_features.csv")).unwrap();
    assert!(features.lines().count() > 1);
}

#[test]
fn recourse_sweep_raises_scores_and_leaves_fixed_columns_alone() {
    let dir = TempDir::new().unwrap();
    let cfg = credit_fixture(dir.path(), "[0.0, 0.5, 1.0]");
    let out = run("recourse", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path().join("out/recourse.json"));
    let summary = report["alphas"].as_array().unwrap();
    let mean = |k: usize| summary[k]["mean_probability"].as_f64().unwrap();
    assert!(mean(2) > mean(0));

    let data = load_csv(dir.path().join("credit.csv"), &synthetic_credit_schema()).unwrap();
    let fixed: Vec<usize> = data
        .roles()
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != FeatureRole::Actionable)
        .map(|(c, _)| c)
        .collect();
    assert!(!fixed.is_empty());
    let moved: Vec<usize> = report["moved"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap() as usize)
        .collect();
    for res in report["results"].as_array().unwrap() {
        let rows = matrix(&res["new_features"]);
        for (r, &i) in moved.iter().enumerate() {
            for &c in &fixed {
                let original = data.features()[[i, c]];
                assert!((rows[r][c] - original).abs() <= 1e-12 * original.abs().max(1.0));
            }
        }
    }
    let probs = fs::read_to_string(dir.path().join("out/recourse_probabilities.csv")).unwrap();
    assert!(probs.starts_with("alpha,individual_id,probability\n"));
    assert_eq!(probs.lines().count(), 1 + 3 * moved.len());
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = credit_fixture(dir.path(), "[0.5]");

    let out = run("recourse", &cfg, &["--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let unknown = put(
        dir.path(),
        "unknown.json",
        r#"{"population_a": {"data": "credit.csv", "schema": "credit_schema.json"}, "colour": 1}"#,
    );
    assert_eq!(run("bias", &unknown, &[]).status.code(), Some(2));

    let missing = put(
        dir.path(),
        "missing.json",
        r#"{"population_a": {"data": "nope.csv", "schema": "credit_schema.json"}}"#,
    );
    let out = run("distance", &missing, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let column = put(
        dir.path(),
        "column.json",
        r#"{"population_a": {"data": "credit.csv", "schema": "credit_schema.json"},
            "partitions_a": [{"column": "income"}]}"#,
    );
    let out = run("bias", &column, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("income"));

    let out = bin().args(["simulate", "--rule", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unconverged_sinkhorn_exits_with_three() {
    let dir = TempDir::new().unwrap();
    credit_fixture(dir.path(), "[0.5]");
    let cfg = put(
        dir.path(),
        "entropic.json",
        r#"{"population_a": {"data": "credit.csv", "schema": "credit_schema.json"},
            "solver": {"method": "entropic", "entropic_epsilon": 0.0001,
                       "max_iterations": 1, "convergence_tol": 1e-12},
            "output_dir": "out"}"#,
    );
    let out = run("distance", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_report_and_table() {
    let dir = TempDir::new().unwrap();
    let spec = put(dir.path(), "sim.json", r#"{"rule": 0.5, "n_a": 60, "n_b": 40, "years": 3}"#);
    let out_dir = dir.path().join("sim");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&spec)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(out_dir.join("simulation.json"));
    assert_eq!(report["years"].as_array().unwrap().len(), 3);
    let closed = report["closed_form_wasserstein"].as_f64().unwrap();
    assert!((closed - 0.5f64.sqrt()).abs() < 1e-12);
    let table = fs::read_to_string(out_dir.join("simulation.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}
