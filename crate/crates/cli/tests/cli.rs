use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xsu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xsu"))
        .args(args)
        .env_remove("XSU_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", stderr(out));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = xsu(&["spec-test", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("--bandwidth"));
}

#[test]
fn usage_errors_exit_two() {
    let out = xsu(&["mc", "--n", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--n"));
    assert_eq!(xsu(&["mc", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(xsu(&[]).status.code(), Some(2));
    assert_eq!(
        xsu(&["bounds", "--input", "x.json", "--mode", "variance"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn domain_errors_exit_one_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    fs::write(&data, "y,z\n1,2\n2,3\n").unwrap();
    let out = xsu(&["spec-test", "--input", path(&data)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1);
    let parsed: Value = serde_json::from_str(err.trim_end()).unwrap();
    assert_eq!(parsed["error"], "invalid_argument");
}

#[test]
fn spec_test_reports_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let mut body = String::from("y,z\n");
    for i in 0..60 {
        let z = i as f64 / 10.0;
        let noise = ((i * 37 % 11) as f64 - 5.0) / 50.0;
        body.push_str(&format!("{},{}\n", 1.0 + 2.0 * z + noise, z));
    }
    fs::write(&data, body).unwrap();
    let result = json(&xsu(&[
        "spec-test",
        "--input",
        path(&data),
        "--bandwidth",
        "0.5",
        "--seed",
        "3",
    ]));
    for key in ["gamma_hat", "I_n", "s_hat2", "T_n", "p_value", "reject"] {
        assert!(result.get(key).is_some(), "missing {key}");
    }
    let gamma = result["gamma_hat"].as_array().unwrap();
    assert!((gamma[0].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert!((gamma[1].as_f64().unwrap() - 2.0).abs() < 0.05);
    let p = result["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn table1_csv_is_reproducible_and_matches_single_cells() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let args = |out: &Path| {
        vec![
            "table1".to_string(),
            "--n".into(),
            "100".into(),
            "--reps".into(),
            "20".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            path(out).into(),
        ]
    };
    let run = |out: &Path| {
        let a = args(out);
        xsu(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let out = run(&first);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("TwoWay"));
    assert!(run(&second).status.success());
    let csv = fs::read_to_string(&first).unwrap();
    assert_eq!(csv, fs::read_to_string(&second).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "error_model,params,column_label,rejection_rate,mc_se"
    );
    assert_eq!(lines.len(), 1 + 6 * 4);

    let cell = dir.path().join("cell.csv");
    let out = xsu(&[
        "mc",
        "--n",
        "100",
        "--reps",
        "20",
        "--seed",
        "42",
        "--errors",
        "ar1",
        "--rho",
        "0.5",
        "--psi",
        "0.1",
        "--tau",
        "0.25",
        "--out",
        path(&cell),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cell = fs::read_to_string(&cell).unwrap();
    let row = cell.lines().nth(1).unwrap();
    assert!(lines.contains(&row), "{row} not in\n{csv}");
}

#[test]
fn config_file_sits_under_explicit_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("mc.json");
    fs::write(
        &config,
        r#"{"n": 60, "reps": 4, "seed": 9, "keep_statistics": true}"#,
    )
    .unwrap();
    let from_file = json(&xsu(&["mc", "--config", path(&config)]));
    assert_eq!(from_file["n"], 60);
    assert_eq!(from_file["reps"], 4);
    assert_eq!(from_file["per_rep_t"].as_array().unwrap().len(), 4);
    let overridden = json(&xsu(&["mc", "--config", path(&config), "--reps", "6"]));
    assert_eq!(overridden["reps"], 6);

    fs::write(&config, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(
        xsu(&["mc", "--config", path(&config)]).status.code(),
        Some(2)
    );
}

#[test]
fn worker_count_does_not_change_results() {
    let base = ["mc", "--n", "80", "--reps", "12", "--keep-statistics"];
    let one = json(&xsu(&[&base[..], &["--workers", "1"]].concat()));
    let three = Command::new(env!("CARGO_BIN_EXE_xsu"))
        .args(base)
        .env("XSU_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(one, json(&three));
}

#[test]
fn sparsity_counts_on_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let lattice = dir.path().join("line.csv");
    fs::write(&lattice, "0\n1\n2\n3\n4\n").unwrap();
    let out = xsu(&[
        "sparsity",
        "--lattice-file",
        path(&lattice),
        "--q",
        "2",
        "--m",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // 25 ordered pairs; 5 diagonal plus 8 adjacent ones form a single class
    assert_eq!(
        stdout(&out),
        "profile,count,kind\n\"1,1\",12,exact\n2,13,exact\n"
    );

    let out = xsu(&[
        "sparsity",
        "--lattice-file",
        path(&lattice),
        "--q",
        "2",
        "--m",
        "1",
        "--budget",
        "3",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().skip(1).all(|l| l.ends_with(",bound")));
    let out = xsu(&[
        "sparsity",
        "--lattice-file",
        path(&lattice),
        "--q",
        "2",
        "--m",
        "1",
        "--budget",
        "3",
        "--method",
        "exact",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("budget_exceeded"));
    assert_eq!(
        xsu(&["sparsity", "--q", "2", "--m", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn mixing_beta_and_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let joint = dir.path().join("joint.csv");
    fs::write(&joint, "0.5,0\n0,0.5\n").unwrap();
    let beta = json(&xsu(&["mixing", "--joint", path(&joint)]));
    assert_eq!(beta["beta"], 0.5);
    let demo = json(&xsu(&[
        "mixing",
        "--joint",
        path(&joint),
        "--couple",
        "--draws",
        "20000",
        "--seed",
        "5",
    ]));
    let rate = demo["mismatch_rate"].as_f64().unwrap();
    let se = demo["mc_se"].as_f64().unwrap();
    assert!((rate - 0.5).abs() < 4.0 * se, "{rate} ± {se}");
}

#[test]
fn bounds_single_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let doc = |m: f64| {
        serde_json::json!({
            "n": 100, "m": m, "delta": 1, "nu": 10,
            "H_p": {"2": 1, "3": 2, "1+delta": 1, "2+delta": 1.5},
            "beta": {"kind": "independent"},
            "tau": {"m": {"2": 300, "3": 5000, "4": 8000, "2,2": 2000}}
        })
    };
    let single = dir.path().join("one.json");
    fs::write(&single, doc(1.0).to_string()).unwrap();
    let report = json(&xsu(&["bounds", "--input", path(&single)]));
    // mixing terms vanish; (1/ν)(1/n)√((τ₄+τ₂,₂)H₂²) = 0.1 and τ₃H₃³/ν³ = 40
    let total = report["total"].as_f64().unwrap();
    assert!((total - 40.1).abs() < 1e-12, "{report}");

    let grid = dir.path().join("grid.json");
    fs::write(&grid, Value::Array(vec![doc(1.0), doc(2.0)]).to_string()).unwrap();
    let sweep = json(&xsu(&["bounds", "--input", path(&grid)]));
    assert_eq!(sweep["reports"].as_array().unwrap().len(), 2);
    assert_eq!(sweep["best_index"], 0);

    let out = xsu(&["bounds", "--input", path(&single), "--mode", "degenerate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing_ingredient"));
}

#[test]
fn clt_demo_writes_csv() {
    let out = xsu(&[
        "clt-demo",
        "--n-grid",
        "10,20",
        "--reps",
        "200",
        "--statistic",
        "standard-normal",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,W1,reps");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,") && lines[1].ends_with(",200"));
}
