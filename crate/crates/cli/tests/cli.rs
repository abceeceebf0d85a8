use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::Value;

use rsl_core::{differential_root, FnPair, Grid, Problem, ProblemDoc, RootOptions};

fn rsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsl"))
        .args(args)
        .env_remove("RSL_DEFAULTS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({e}): {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn catalog_lists_examples_and_controls() {
    let out = rsl(&["catalog"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for id in ["ex2.1", "ex2.2", "ex2.3", "const-coeff", "wkb-ok"] {
        assert!(text.lines().any(|l| l == id), "missing {id}");
    }
}

#[test]
fn catalog_json_round_trips() {
    let out = rsl(&["catalog", "--format", "json"]);
    assert!(out.status.success());
    let docs: Vec<ProblemDoc> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(docs.len(), rsl_core::catalog().len());
    for doc in docs {
        let p = Problem::from_doc(doc.clone()).unwrap();
        assert_eq!(p.to_doc(), doc);
    }
}

#[test]
fn analyze_ex21_decaying() {
    let out = rsl(&["analyze", "--problem", "ex2.1", "--param", "lambda=1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["verdict"]["boundedness"], "AllVanish");
    assert_eq!(r["oracle"]["boundedness"], "AllVanish");
    assert_eq!(r["agreement"]["boundedness"], true);
    assert_eq!(r["paper_verdict"]["status"], "match");
    assert_eq!(r["config"]["t_end"], 40.0);
    assert_eq!(r["config"]["criteria"]["trend"]["Delta"], 2.0);
    assert!(r.get("wall_time_s").is_none());
}

#[test]
fn analyze_ex21_critical_value_grows() {
    let out = rsl(&[
        "analyze",
        "--problem",
        "ex2.1",
        "--param",
        "lambda=0",
        "--no-identities",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["verdict"]["r1_trend"]["verdict"], "DivergesToPlusInf");
    assert_eq!(r["verdict"]["boundedness"], "UnboundedSolutionExists");
}

#[test]
fn nonpositive_discriminant_exits_2_with_report() {
    let inline = r#"{"id":"osc","p":"0","q":"1 + t","t0":0}"#;
    let out = rsl(&["analyze", "--problem", inline, "--t-end", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert_eq!(r["error"]["kind"], "NonPositiveDiscriminant");
    assert!(r["verdict"].is_null());
    assert!(r["oracle"].is_object());
}

#[test]
fn integrator_failure_exits_3() {
    let out = rsl(&[
        "analyze",
        "--problem",
        "ex2.1",
        "--tol",
        "1e-300",
        "--no-identities",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bad_flags_exit_1() {
    assert_eq!(
        rsl(&["analyze", "--problem", "ex2.1", "--param", "lambda"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        rsl(&["analyze", "--problem", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(
        rsl(&["analyze", "--problem", "ex2.1", "--delta", "-1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(rsl(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn reports_are_byte_identical() {
    let args = ["analyze", "--problem", "ex2.3"];
    let a = rsl(&args);
    let b = rsl(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn timing_is_opt_in() {
    let r = json(&rsl(&["analyze", "--problem", "const-coeff", "--timing"]));
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn defaults_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("defaults.json");
    std::fs::write(
        &path,
        r#"{"problem":"const-coeff","criteria":{"trend":{"band":7}}}"#,
    )
    .unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["analyze", "--no-identities"];
        args.extend_from_slice(extra);
        let out = Command::new(env!("CARGO_BIN_EXE_rsl"))
            .args(&args)
            .env("RSL_DEFAULTS", &path)
            .output()
            .unwrap();
        json(&out)
    };
    let r = run(&[]);
    assert_eq!(r["config"]["problem"], "const-coeff");
    assert_eq!(r["config"]["criteria"]["trend"]["band"], 7.0);
    let r = run(&["--band", "9"]);
    assert_eq!(r["config"]["criteria"]["trend"]["band"], 9.0);
}

#[test]
fn report_written_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = rsl(&[
        "analyze",
        "--problem",
        "const-coeff",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(r["verdict"]["stability"], "AsymptoticallyStable");
}

#[test]
fn sweep_ex22_stability() {
    let out = rsl(&[
        "sweep",
        "--problem",
        "ex2.2",
        "--sweep-param",
        "lambda",
        "--values=-1,-0.5,0.5,1",
    ]);
    assert!(out.status.success());
    let r = json(&out);
    let rows = r["rows"].as_array().unwrap();
    let got: Vec<&str> = rows
        .iter()
        .map(|row| row["stability"].as_str().unwrap())
        .collect();
    assert_eq!(
        got,
        [
            "Unstable",
            "Unstable",
            "AsymptoticallyStable",
            "AsymptoticallyStable"
        ]
    );
    let values: Vec<f64> = rows
        .iter()
        .map(|row| row["value"][0].as_f64().unwrap())
        .collect();
    assert_eq!(values, [-1.0, -0.5, 0.5, 1.0]);
    for row in rows {
        assert_eq!(row["stability"], row["oracle_stability"]);
    }
}

#[test]
fn sweep_ex21_small_positive_needs_long_horizon() {
    let out = rsl(&[
        "sweep",
        "--problem",
        "ex2.1",
        "--sweep-param",
        "lambda",
        "--values",
        "0.1,1",
        "--t-end",
        "800",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        assert_eq!(line.split(',').nth(3), Some("AllVanish"), "{line}");
    }
}

#[test]
fn sweep_empty_list() {
    let out = rsl(&[
        "sweep",
        "--problem",
        "ex2.2",
        "--sweep-param",
        "lambda",
        "--values",
        "",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 0);
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let out = rsl(&[
        "sweep",
        "--problem",
        "ex2.2",
        "--sweep-param",
        "mu",
        "--values",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn root_constant() {
    let out = rsl(&[
        "root", "--x", "4", "--t0", "0", "--t-end", "3", "--grid", "10",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,y,sqrt_x,rho_upper,Q"));
    for l in lines {
        assert_eq!(l.split(',').nth(1), Some("2"));
    }
}

#[test]
fn root_linear_matches_tight_reference() {
    let out = rsl(&[
        "root", "--x", "t", "--t0", "1", "--t-end", "100", "--grid", "500",
    ]);
    assert!(out.status.success());
    let x = FnPair {
        f: |t: f64| t,
        df: |_: f64| 1.0,
    };
    let grid = Arc::new(Grid::log_stretched(1.0, 100.0, 500).unwrap());
    let opts = RootOptions {
        tol: 1e-13,
        ..RootOptions::default()
    };
    let reference = differential_root(&x, grid, &opts).unwrap();
    let text = stdout(&out);
    let ys: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ys.len(), reference.y.len());
    for (a, b) in ys.iter().zip(&reference.y) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn root_reports_first_violation() {
    let out = rsl(&["root", "--x", "t - 2", "--t0", "0", "--t-end", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at t = 0"));
}

#[test]
fn oracle_json_and_csv() {
    let r = json(&rsl(&["oracle", "--problem", "harmonic"]));
    assert_eq!(r["oracle"]["boundedness"], "AllBounded");
    assert_eq!(r["oracle"]["stability"], "LiapunovStable");

    let out = rsl(&[
        "oracle",
        "--problem",
        "harmonic",
        "--format",
        "csv",
        "--basis",
        "2",
    ]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,re_phi,im_phi,re_dphi,im_dphi"));
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first, [0.0, 0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn text_summaries() {
    let out = rsl(&["analyze", "--problem", "const-coeff", "--format", "text", "--no-identities"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("problem: const-coeff\n"));
    assert!(text.contains("stability: AsymptoticallyStable (oracle AsymptoticallyStable)"), "{text}");

    let out = rsl(&["oracle", "--problem", "harmonic", "--format", "text"]);
    assert!(stdout(&out).contains("stability: LiapunovStable"));
}
