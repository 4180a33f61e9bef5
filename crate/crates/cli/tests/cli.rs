use std::process::{Command, Output};

use serde_json::Value;

const POINT: &str = "x=0.1,0.2;y=0.3,-0.5";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(args)
        .output()
        .unwrap()
}

/// Runs with `--json` and returns the exit code and parsed report.
fn run_json(args: &[&str]) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap();
    full.extend(["--json", p]);
    let out = run(&full);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("no report: {out:?}"));
    (
        out.status.code().unwrap(),
        serde_json::from_str(&text).unwrap(),
    )
}

fn check(report: &Value, name: &str) -> bool {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))["pass"]
        .as_bool()
        .unwrap()
}

#[test]
fn malformed_point_exits_with_offset() {
    let out = run(&[
        "analyze",
        "--catalog",
        "klein",
        "--point",
        "x=0.1,0.2;y=0.3,oops",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("at byte 16"), "{err}");
}

#[test]
fn point_outside_domain_is_an_error() {
    let out = run(&[
        "analyze",
        "--catalog",
        "klein",
        "--point",
        "x=0.9,0.9;y=1,0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn klein_analysis_reports_minus_one() {
    let (code, r) = run_json(&["analyze", "--catalog", "klein", "--point", POINT]);
    assert_eq!(code, 0);
    let flag = &r["sections"]["flag_constancy"];
    assert!(flag["pass"].as_bool().unwrap());
    assert!((flag["kappa"].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert_eq!(r["probes"].as_array().unwrap().len(), 10);
    assert_eq!(r["input_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn deformation_by_metric_flattens_klein() {
    let (code, r) = run_json(&[
        "deform",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--lambda",
        "1",
        "--point",
        POINT,
    ]);
    assert_eq!(code, 0);
    assert!(r["sections"]["r_flatness"]["r_flat"].as_bool().unwrap());
    assert!(check(&r, "jacobi_closed_form"));
    assert!(check(&r, "projector_matches_connection"));
}

#[test]
fn zero_lambda_is_identity() {
    let (code, r) = run_json(&[
        "deform",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--lambda",
        "0",
        "--point",
        POINT,
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["sections"]["deformation"]["identity"], true);
}

#[test]
fn negative_lambda_is_accepted() {
    let (code, r) = run_json(&[
        "deform",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--lambda",
        "-0.5",
        "--point",
        POINT,
    ]);
    assert_eq!(code, 0);
    assert!(check(&r, "eigenvalue_shift"));
}

#[test]
fn non_invariant_factor_is_refused() {
    let (code, r) = run_json(&[
        "deform",
        "--catalog",
        "euclidean",
        "--factor",
        "x[1]*sqrt(dot(y,y))",
        "--lambda",
        "1",
        "--point",
        POINT,
    ]);
    assert_eq!(code, 1);
    assert!(!check(&r, "factor_invariance"));
    assert!(r["sections"].get("deformation").is_none());
}

#[test]
fn missing_lambda_is_an_input_error() {
    let out = run(&[
        "deform",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--point",
        POINT,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn euclidean_holonomy_has_rank_n() {
    let (code, r) = run_json(&["holonomy", "--catalog", "euclidean", "--point", POINT]);
    assert_eq!(code, 0);
    let span = &r["sections"]["holonomy_rank"];
    assert_eq!(span["rank"], 2);
    assert_eq!(span["lower_bound"], false);
}

#[test]
fn deformed_klein_holonomy_is_full() {
    let (_, r) = run_json(&[
        "holonomy",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--lambda",
        "2",
        "--point",
        POINT,
    ]);
    assert_eq!(r["sections"]["holonomy_rank"]["rank"], 4);
    assert_eq!(
        r["sections"]["energy_obstruction"]["verdict"],
        "not_metrizable_at_point"
    );
}

#[test]
fn shallow_closure_is_a_lower_bound() {
    let (_, r) = run_json(&[
        "holonomy",
        "--catalog",
        "klein",
        "--point",
        POINT,
        "--depth",
        "1",
    ]);
    assert_eq!(r["sections"]["holonomy_rank"]["lower_bound"], true);
}

#[test]
fn second_example_lists_tensions() {
    let (code, r) = run_json(&["verify-example", "--example", "2", "--mu", "2"]);
    assert_eq!(code, 0);
    let ex = &r["sections"]["example"];
    assert!(!ex["tensions"].as_array().unwrap().is_empty());
    let verdict = |id: &str| {
        ex["claims"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["id"] == id)
            .unwrap()["verdict"]
            .clone()
    };
    assert_eq!(verdict("spray_formula"), "refuted");
    assert_eq!(verdict("constant_flag_curvature"), "confirmed");
}

#[test]
fn second_example_needs_mu() {
    let out = run(&["verify-example", "--example", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    let args = [
        "deform",
        "--catalog",
        "klein",
        "--factor",
        "F",
        "--lambda",
        "2",
        "--point",
        POINT,
    ];
    let (_, mut a) = run_json(&args);
    let (_, mut b) = run_json(&args);
    a.as_object_mut().unwrap().remove("timings");
    b.as_object_mut().unwrap().remove("timings");
    assert_eq!(a, b);
}

#[test]
fn metric_file_matches_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("klein.metric");
    std::fs::write(
        &path,
        "# unit disk\nname = klein\ndim = 2\nF = sqrt(((1 - dot(x,x))*dot(y,y) + dot(x,y)^2)/(1 - dot(x,x))^2)\ndomain = 1 - dot(x,x)\n",
    )
    .unwrap();
    let (code, r) = run_json(&[
        "analyze",
        "--metric",
        path.to_str().unwrap(),
        "--point",
        POINT,
    ]);
    assert_eq!(code, 0);
    let (_, c) = run_json(&["analyze", "--catalog", "klein", "--point", POINT]);
    assert_eq!(
        r["sections"]["curvature"]["jacobi_endomorphism"],
        c["sections"]["curvature"]["jacobi_endomorphism"]
    );
}

#[test]
fn non_homogeneous_metric_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.metric");
    std::fs::write(&path, "dim = 2\nF = dot(y,y)\n").unwrap();
    let out = run(&[
        "analyze",
        "--metric",
        path.to_str().unwrap(),
        "--point",
        POINT,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("homogeneous"));
}
