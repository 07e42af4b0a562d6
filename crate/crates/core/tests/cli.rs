use std::path::Path;

use mstat::cli::run;
use serde_json::Value;
use tempfile::TempDir;

fn mstat(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mstat").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn orthant_member_exits_zero() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        r#"{"Z":"orthant","z":[0],"g":[0],"zeta":[-2],"eta":[-3]}"#,
    );
    for method in ["auto", "explicit", "oracle"] {
        let (code, out, _) = mstat(&[
            "gph-normal",
            "--input",
            &q,
            "--method",
            method,
            "--format",
            "json",
        ]);
        assert_eq!(code, 0, "{method}");
        assert_eq!(json(&out)["member"], Value::Bool(true));
    }
}

#[test]
fn non_member_exits_two_in_both_formats() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        r#"{"Z":{"A":[[-1.0]],"b":[0.0]},"z":[0],"g":[0],"zeta":[1],"eta":[1]}"#,
    );
    let (code, out, _) = mstat(&["gph-normal", "--input", &q, "--format", "json"]);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["member"], Value::Bool(false));
    let (code, out, _) = mstat(&["gph-normal", "--input", &q]);
    assert_eq!(code, 2);
    assert!(out.contains("member: false"));
}

#[test]
fn non_graph_point_reports_empty_coderivative() {
    let dir = TempDir::new().unwrap();
    // z = 1 is interior, so only g = 0 lies on the graph.
    let q = write(
        dir.path(),
        "q.json",
        r#"{"Z":"orthant","z":[1],"g":[1],"zeta":[0],"eta":[0]}"#,
    );
    let (code, out, _) = mstat(&["gph-normal", "--input", &q, "--format", "json"]);
    assert_eq!(code, 2);
    let v = json(&out);
    assert_eq!(v["graph_point"], Value::Bool(false));
    assert_eq!(v["member"], Value::Bool(false));
}

#[test]
fn cones_on_simplex_vertex() {
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        r#"{"Z":"simplex","z":[1,0],"v":[1,0]}"#,
    );
    let (code, out, _) = mstat(&["cones", "--input", &q, "--format", "json"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["schema"], "mstat/1");
    assert_eq!(v["active"], serde_json::json!([1, 2]));
    assert_eq!(v["v_in_normal_cone"], Value::Bool(true));
}

#[test]
fn realizable_portfolio_pipeline_verifies() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.json");
    let p = p.to_str().unwrap();
    let (code, _, err) = mstat(&["gen", "portfolio", "--n", "5", "--output", p]);
    assert_eq!(code, 0, "{err}");

    let (code, truth_loss, _) =
        mstat(&["spo-portfolio", "loss", "--problem", p, "--format", "json"]);
    assert_eq!(code, 0);
    assert_eq!(json(&truth_loss)["objective"], serde_json::json!(0.0));

    let (code, cert, _) = mstat(&[
        "spo-portfolio",
        "certify",
        "--problem",
        p,
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    let c = write(dir.path(), "c.json", &cert);
    let report = dir.path().join("r.json");
    let (code, out, _) = mstat(&[
        "verify",
        "--problem",
        p,
        "--certificate",
        &c,
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("verdict: pass"));
    let r = json(&std::fs::read_to_string(&report).unwrap());
    assert_eq!(r["pass"], Value::Bool(true));
    assert_eq!(r["mode"], "convex");
    assert_eq!(r["schema"], "mstat/1");
}

#[test]
fn tampered_certificate_fails_with_exit_two() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.json");
    let p = p.to_str().unwrap();
    mstat(&["gen", "portfolio", "--n", "3", "--output", p]);
    let (_, cert, _) = mstat(&[
        "spo-portfolio",
        "certify",
        "--problem",
        p,
        "--format",
        "json",
    ]);
    let mut c = json(&cert);
    c["scenarios"][0]["z"][0] =
        serde_json::json!(c["scenarios"][0]["z"][0].as_f64().unwrap() + 0.05);
    let c = write(dir.path(), "c.json", &c.to_string());
    let (code, out, _) = mstat(&[
        "spo-portfolio",
        "verify",
        "--problem",
        p,
        "--certificate",
        &c,
        "--format",
        "json",
    ]);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["pass"], Value::Bool(false));
}

#[test]
fn fd_check_on_newsvendor_kernel() {
    let dir = TempDir::new().unwrap();
    let nv = dir.path().join("nv.json");
    let nv = nv.to_str().unwrap();
    assert_eq!(
        mstat(&["gen", "newsvendor", "--n", "8", "--output", nv]).0,
        0
    );
    let (code, out, _) = mstat(&[
        "fd-check",
        "--problem",
        nv,
        "--op",
        "grad-theta-cdf",
        "--trials",
        "100",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("max relative error"));
    let (code, out, _) = mstat(&[
        "fd-check",
        "--problem",
        nv,
        "--op",
        "grad-theta-cdf",
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    assert!(json(&out)["max_relative_error"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let files: Vec<String> = ["a", "b", "c"]
        .iter()
        .zip(["0", "0", "1"])
        .map(|(name, seed)| {
            let p = dir.path().join(name);
            let p = p.to_str().unwrap().to_string();
            assert_eq!(
                mstat(&["gen", "newsvendor", "--seed", seed, "--output", &p]).0,
                0
            );
            std::fs::read_to_string(&p).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn newsvendor_commands_run() {
    let dir = TempDir::new().unwrap();
    let nv = dir.path().join("nv.json");
    let nv = nv.to_str().unwrap();
    mstat(&["gen", "newsvendor", "--n", "6", "--output", nv]);
    let (code, out, _) = mstat(&[
        "newsvendor",
        "solve",
        "--problem",
        nv,
        "--theta",
        "1",
        "--x",
        "0.5,0.5",
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    assert!(json(&out)["residual"].as_f64().unwrap().abs() <= 1e-12);
    let (code, out, _) = mstat(&[
        "newsvendor",
        "gridsearch",
        "--problem",
        nv,
        "--grid",
        "0.5,1,2",
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    let theta = json(&out)["theta"].as_f64().unwrap();
    assert!([0.5, 1.0, 2.0].contains(&theta));
    let (code, out, _) = mstat(&[
        "newsvendor",
        "loss",
        "--problem",
        nv,
        "--theta",
        "1",
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    assert!(json(&out)["losses"]
        .as_array()
        .unwrap()
        .iter()
        .all(|l| l.as_f64().unwrap() >= 0.0));
}

#[test]
fn csv_samples_replace_problem_scenarios() {
    let dir = TempDir::new().unwrap();
    let nv = dir.path().join("nv.json");
    let nv = nv.to_str().unwrap();
    mstat(&["gen", "newsvendor", "--n", "4", "--dx", "1", "--output", nv]);
    let csv = write(dir.path(), "s.csv", "x_1,y\n0.2,11\n0.8,14\n");
    let (code, out, _) = mstat(&[
        "newsvendor",
        "loss",
        "--problem",
        nv,
        "--theta",
        "1",
        "--samples-csv",
        &csv,
        "--format",
        "json",
    ]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["losses"].as_array().unwrap().len(), 2);

    let bad = write(dir.path(), "bad.csv", "x_1,y\n0.2,eleven\n");
    let (code, _, err) = mstat(&[
        "newsvendor",
        "loss",
        "--problem",
        nv,
        "--theta",
        "1",
        "--samples-csv",
        &bad,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("row") && err.contains("'y'"), "{err}");
}

#[test]
fn usage_and_input_errors_exit_one() {
    assert_eq!(mstat(&["bogus"]).0, 1);
    assert_eq!(
        mstat(&["cones", "--input", "x.json", "--no-such-flag"]).0,
        1
    );
    assert_eq!(mstat(&["cones", "--input", "/nonexistent/q.json"]).0, 1);
    let dir = TempDir::new().unwrap();
    let q = write(dir.path(), "q.json", "{\"Z\": \"orthant\",\n \"z\": [0,");
    let (code, _, err) = mstat(&["cones", "--input", &q]);
    assert_eq!(code, 1);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(mstat(&["--help"]).0, 0);
}

#[test]
fn mode_mismatch_is_an_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("p.json");
    let p = p.to_str().unwrap();
    mstat(&["gen", "portfolio", "--n", "2", "--output", p]);
    let (_, cert, _) = mstat(&[
        "spo-portfolio",
        "certify",
        "--problem",
        p,
        "--format",
        "json",
    ]);
    let c = write(dir.path(), "c.json", &cert);
    // No mu in the certificate.
    assert_eq!(
        mstat(&[
            "verify",
            "--problem",
            p,
            "--certificate",
            &c,
            "--mode",
            "penalized"
        ])
        .0,
        1
    );
    // A portfolio problem handed to the newsvendor verifier.
    assert_eq!(
        mstat(&["newsvendor", "verify", "--problem", p, "--certificate", &c]).0,
        1
    );
}

#[test]
fn text_and_json_verdicts_agree() {
    let dir = TempDir::new().unwrap();
    for (zeta, eta) in [("-2", "-3"), ("1", "1"), ("0", "5"), ("3", "0")] {
        let q = write(
            dir.path(),
            "q.json",
            &format!(r#"{{"Z":"orthant","z":[0],"g":[0],"zeta":[{zeta}],"eta":[{eta}]}}"#),
        );
        let (c1, text, _) = mstat(&["gph-normal", "--input", &q]);
        let (c2, js, _) = mstat(&["gph-normal", "--input", &q, "--format", "json"]);
        assert_eq!(c1, c2);
        let member = json(&js)["member"].as_bool().unwrap();
        assert!(text.contains(&format!("member: {member}")));
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mstat");
    let dir = TempDir::new().unwrap();
    let q = write(
        dir.path(),
        "q.json",
        r#"{"Z":"orthant","z":[0],"g":[0],"zeta":[-2],"eta":[-3]}"#,
    );
    let st = std::process::Command::new(bin)
        .args(["gph-normal", "--input", &q])
        .env("MSTAT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("member: true"));
    let st = std::process::Command::new(bin)
        .arg("bogus")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
}
