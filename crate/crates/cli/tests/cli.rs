use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn killing(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_killing"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn basis_file(dir: &TempDir, spec_name: &str, kind: &str, p: &str) -> PathBuf {
    let path = dir.path().join(format!("{spec_name}-{kind}-{p}.json"));
    let s = spec(spec_name);
    let out = killing(&[
        "basis",
        "--spec",
        path_str(&s),
        "--kind",
        kind,
        "--p",
        p,
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn basis_round_trips_through_verify() {
    let dir = TempDir::new().unwrap();
    for (spec_name, kind, p) in [
        ("psi_cubic.json", "ky", "1"),
        ("psi_cubic.json", "ky", "2"),
        ("psi_cubic.json", "kt", "2"),
        ("sphere3.json", "kt", "1"),
        ("sphere3.json", "ckt", "2"),
        ("hyperbolic2.json", "ky", "1"),
    ] {
        let file = basis_file(&dir, spec_name, kind, p);
        let s = spec(spec_name);
        let out = killing(&[
            "verify",
            "--spec",
            path_str(&s),
            "--tensor",
            path_str(&file),
            "--kind",
            kind,
            "--p",
            p,
        ]);
        assert_eq!(
            code(&out),
            0,
            "{spec_name} {kind} {p}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
        let report = json(&out);
        assert_eq!(report["passed"], Value::Bool(true));
    }
}

#[test]
fn basis_file_schema() {
    let dir = TempDir::new().unwrap();
    let file = basis_file(&dir, "psi_cubic.json", "ky", "2");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(v["n"], 3);
    assert_eq!(v["p"], 2);
    assert_eq!(v["kind"], "ky");
    assert!(v["psi"].is_string());
    assert!(v["residual_max"].as_f64().unwrap() < 1e-9);
    let elements = v["elements"].as_array().unwrap();
    assert_eq!(elements.len(), 4);
    assert_eq!(elements[0]["provenance"], "A[1,2,3]");
    assert!(elements[0]["components"]["1,2"].is_string());
}

#[test]
fn reports_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let s = spec("psi_cubic.json");
    let a = killing(&["basis", "--spec", path_str(&s), "--kind", "kt", "--p", "1"]);
    let b = killing(&["basis", "--spec", path_str(&s), "--kind", "kt", "--p", "1"]);
    assert_eq!(a.stdout, b.stdout);
    let file = basis_file(&dir, "psi_cubic.json", "ky", "2");
    let args = [
        "verify",
        "--spec",
        path_str(&s),
        "--tensor",
        path_str(&file),
        "--seed",
        "11",
    ];
    let (a, b) = (killing(&args), killing(&args));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["seed"], 11);
}

#[test]
fn tampered_tensor_fails_verification() {
    let dir = TempDir::new().unwrap();
    let file = basis_file(&dir, "psi_cubic.json", "ky", "1");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    let comps = v["elements"][0]["components"].as_object_mut().unwrap();
    let (key, expr) = comps
        .iter()
        .next()
        .map(|(k, e)| (k.clone(), e.as_str().unwrap().to_string()))
        .unwrap();
    comps.insert(key, Value::String(format!("(1 + x2/3)*({expr})")));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let s = spec("psi_cubic.json");
    let out = killing(&["verify", "--spec", path_str(&s), "--tensor", path_str(&bad)]);
    assert_eq!(code(&out), 1);
    let report = json(&out);
    assert_eq!(report["elements"][0]["passed"], Value::Bool(false));
    assert_eq!(report["elements"][1]["passed"], Value::Bool(true));
}

#[test]
fn verify_writes_csv_trace() {
    let dir = TempDir::new().unwrap();
    let file = basis_file(&dir, "psi_cubic.json", "kt", "1");
    let csv = dir.path().join("trace.csv");
    let s = spec("psi_cubic.json");
    let out = killing(&[
        "verify",
        "--spec",
        path_str(&s),
        "--tensor",
        path_str(&file),
        "--csv",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("t,x1,x2,x3,v1,v2,v3,N0,N1,N2,N3,N4,N5\n"));
    assert!(text.lines().count() > 100);
}

#[test]
fn dims_table_matches_oracle() {
    let out = killing(&["dims", "--n-max", "4", "--p-max", "2"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["all_match"], Value::Bool(true));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let row = rows.iter().find(|r| r["n"] == 3 && r["p"] == 2).unwrap();
    assert_eq!(row["ky_closed"], 4);
    assert_eq!(row["kt_oracle"], 20);
    let text = killing(&["dims", "--n-max", "3", "--p-max", "1", "--text"]);
    assert_eq!(code(&text), 0);
    assert!(String::from_utf8(text.stdout)
        .unwrap()
        .contains("  3   1          6          6"));
}

#[test]
fn classify_reports() {
    let psi = json(&killing(&["classify", "--spec", path_str(&spec("psi_cubic.json"))]));
    assert_eq!(psi["equiprojective"], Value::Bool(true));
    let generic = json(&killing(&["classify", "--spec", path_str(&spec("generic.json"))]));
    assert_eq!(generic["equiprojective"], Value::Bool(false));
    assert_eq!(generic["projectively_flat"], Value::Bool(false));
    let flat = json(&killing(&["classify", "--spec", path_str(&spec("flat.json"))]));
    for key in ["volume", "ricci_asymmetry", "ricci", "weyl"] {
        assert_eq!(flat["residuals"][key], 0.0);
    }
    let sphere = json(&killing(&["classify", "--spec", path_str(&spec("sphere3.json"))]));
    assert_eq!(sphere["equiprojective"], Value::Bool(true));
    assert_eq!(sphere["ricci_flat"], Value::Bool(false));
    let disk = json(&killing(&["classify", "--spec", path_str(&spec("hyperbolic2.json"))]));
    assert_eq!(disk["projectively_flat"], Value::Bool(true));
    assert!(disk["residuals"]["cotton"].as_f64().unwrap() < 1e-9);
}

#[test]
fn decompose_recovers_basis_elements() {
    let dir = TempDir::new().unwrap();
    let file = basis_file(&dir, "sphere3.json", "ckt", "2");
    let s = spec("sphere3.json");
    let out = killing(&["decompose", "--spec", path_str(&s), "--tensor", path_str(&file)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    for (k, el) in v["elements"].as_array().unwrap().iter().enumerate() {
        let coeffs: Vec<f64> = el["killing_yano"]
            .as_array()
            .unwrap()
            .iter()
            .chain(el["closed"].as_array().unwrap())
            .map(|c| c["value"].as_f64().unwrap())
            .collect();
        for (j, c) in coeffs.iter().enumerate() {
            let want = if j == k { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-7, "element {k} coefficient {j}: {c}");
        }
        assert!(el["codifferential_max"].as_f64().unwrap() < 1e-8);
        assert!(el["exterior_derivative_max"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn spec_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(
        &broken,
        r#"{"name":"b","n":2,"kind":"psi-generated","psi":"x1 +* x2","domain":[[-1,1],[-1,1]]}"#,
    )
    .unwrap();
    let out = killing(&["classify", "--spec", path_str(&broken)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot parse psi"));

    let file = basis_file(&dir, "psi_cubic.json", "ky", "2");
    let out = killing(&[
        "decompose",
        "--spec",
        path_str(&spec("psi_cubic.json")),
        "--tensor",
        path_str(&file),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("curvature"));

    let out = killing(&[
        "basis",
        "--spec",
        path_str(&spec("generic.json")),
        "--kind",
        "ky",
        "--p",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    let out = killing(&[
        "verify",
        "--spec",
        path_str(&spec("psi_cubic.json")),
        "--tensor",
        path_str(&file),
        "--kind",
        "kt",
    ]);
    assert_eq!(code(&out), 2);
    let out = killing(&[
        "basis",
        "--spec",
        path_str(&spec("psi_cubic.json")),
        "--kind",
        "ky",
        "--p",
        "3",
    ]);
    assert_eq!(code(&out), 2);
}
