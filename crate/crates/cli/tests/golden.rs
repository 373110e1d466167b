//! Golden files pin the JSON schemas and values of the CLI. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test -p ctost-cli --test golden`.

use std::path::PathBuf;
use std::process::{Command, Output};

use ctost::powerkernel::{power_uni, size_uni, UnivPowerQuery};
use ctost::univariate::{ctost_adjust, tost_adjust};
use ctost::{EquivalenceSpec, Method};
use serde_json::Value;

fn ctost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctost"))
        .args(args)
        .env_remove("CTOST_TABLE_PATH")
        .output()
        .expect("binary runs")
}

fn stdout_json(args: &[&str]) -> Value {
    let out = ctost(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check_golden(name: &str, bytes: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, bytes).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(String::from_utf8_lossy(bytes), String::from_utf8_lossy(&expected), "{name} drifted");
}

const CASES: &[(&str, &[&str])] = &[
    ("case_study_tost.json", &["case-study", "--method", "tost"]),
    ("case_study_ctost.json", &["case-study", "--method", "ctost"]),
    ("case_study_alpha_tost.json", &["case-study", "--method", "alpha-tost"]),
    ("assess_univariate.json", &["assess", "--theta-hat", "0.05", "--sigma1-hat", "0.1", "--nu2", "20"]),
    ("assess_univariate_text.txt", &["assess", "--theta-hat", "-0.02", "--sigma1-hat", "0.08", "--nu2", "12", "--format", "text"]),
    ("adjust_ctost.json", &["adjust", "--theta-hat", "0", "--sigma1-hat", "0.05", "--nu2", "20"]),
    ("adjust_refined.json", &["adjust", "--theta-hat", "0", "--sigma1-hat", "0.12", "--nu2", "5", "--refined"]),
    ("adjust_delta_tost.json", &["adjust", "--theta-hat", "0", "--sigma1-hat", "0.1", "--nu2", "15", "--method", "delta-tost"]),
    ("adjust_case_study_ctost.json", &["adjust", "--case-study"]),
    ("size_grid.json", &["size", "--sigma1", "0.1,0.2", "--nu2", "20"]),
    ("power_grid.csv", &["power", "--theta", "0,0.1", "--sigma1", "0.1", "--nu2", "10,40", "--format", "csv"]),
    ("table_small.csv", &["table", "--sigma-grid", "0.05,0.1", "--nu-grid", "10,20"]),
];

#[test]
fn golden_outputs() {
    for (name, args) in CASES {
        let out = ctost(args);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        check_golden(name, &out.stdout);
    }
}

#[test]
fn golden_usage_error() {
    let out = ctost(&["assess", "--method", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "id,x\n1,2\n").unwrap();
    let bad_json = dir.path().join("bad.json");
    std::fs::write(&bad_json, "{\"theta_hat\": [0.1]").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["assess".into(), "--input".into(), bad_csv.display().to_string()],
        vec!["assess".into(), "--input".into(), bad_json.display().to_string()],
        vec!["assess".into(), "--input".into(), dir.path().join("missing.json").display().to_string()],
        vec!["assess".into(), "--theta-hat".into(), "0.1".into()],
        vec!["assess".into(), "--theta-hat".into(), "0".into(), "--sigma1-hat".into(), "-1".into(), "--nu2".into(), "10".into()],
        vec!["assess".into(), "--case-study".into(), "--alpha0".into(), "0.7".into()],
        vec!["assess".into(), "--case-study".into(), "--method".into(), "ctost-star".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = ctost(&refs);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("{args:?}: stderr is not JSON"));
        assert!(err["error"].is_string() && err["message"].is_string() && err["trace"].is_array());
    }
}

#[test]
fn non_convergence_exits_3_with_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    std::fs::write(
        &p,
        r#"{"theta_hat":[0,0,0],"sigma1_hat":[0.1,0.12,0.2],"nu2":20,"correlation":[[1,0.5,0.5],[0.5,1,0.5],[0.5,0.5,1]]}"#,
    )
    .unwrap();
    let out = ctost(&["adjust", "-i", p.to_str().unwrap(), "--tol", "1e-12", "--max-outer", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "non_convergence");
    assert_eq!(err["trace"].as_array().unwrap().len(), 1);
}

#[test]
fn verdict_is_in_payload_not_exit_code() {
    let out = ctost(&["case-study", "--method", "tost"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "not equivalent");
}

#[test]
fn degenerate_certainty_is_equivalent_for_every_method() {
    for m in ["tost", "alpha-tost", "delta-tost", "ctost", "ctost-star"] {
        let v = stdout_json(&["assess", "--theta-hat", "0", "--sigma1-hat", "1e-6", "--nu2", "20", "--method", m]);
        assert_eq!(v["verdict"], "equivalent", "{m}");
    }
}

#[test]
fn adjust_examples() {
    let v = stdout_json(&["adjust", "--theta-hat", "0", "--sigma1-hat", "0.05", "--nu2", "20"]);
    assert!((v["adjustment"]["c_used"].as_f64().unwrap() - 0.1409).abs() < 5e-4);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sym.json");
    std::fs::write(&p, r#"{"theta_hat":[0.01,-0.01],"sigma1_hat":[0.1,0.1],"nu2":20,"correlation":[[1,0],[0,1]]}"#).unwrap();
    let v = stdout_json(&["adjust", "-i", p.to_str().unwrap()]);
    let c = v["adjustment"]["c_star"].as_array().unwrap();
    assert!((c[0].as_f64().unwrap() - c[1].as_f64().unwrap()).abs() < 1e-8);

    let v = stdout_json(&["adjust", "--theta-hat", "0", "--sigma1-hat", "0.1", "--nu2", "5", "--refined"]);
    assert!(v["adjustment"]["alpha_c"].as_f64().unwrap() < 0.05);
}

#[test]
fn single_point_matches_library_bit_exactly() {
    let spec = EquivalenceSpec::default();
    let v = stdout_json(&["power", "--theta", "0.03", "--sigma1", "0.13", "--nu2", "17", "--method", "ctost"]);
    let adj = ctost_adjust(0.13, 17, &spec).unwrap();
    let lib = power_uni(&UnivPowerQuery { theta: 0.03, sigma1: 0.13, nu2: 17, t: adj.t_used, c: adj.c_used }).unwrap();
    assert_eq!(v["rows"][0]["power"].as_f64().unwrap().to_bits(), lib.to_bits());

    let v = stdout_json(&["size", "--sigma1", "0.07", "--nu2", "9", "--method", "tost"]);
    let adj = tost_adjust(0.07, 9, &spec.with_method(Method::Tost)).unwrap();
    let lib = size_uni(0.07, 9, adj.t_used, adj.c_used, spec.c0).unwrap();
    assert_eq!(v["rows"][0]["size"].as_f64().unwrap().to_bits(), lib.to_bits());
}

#[test]
fn default_grid_patterns() {
    let v = stdout_json(&["size", "--method", "tost"]);
    for row in v["rows"].as_array().unwrap() {
        assert!(row["size"].as_f64().unwrap() < 0.05, "{row}");
    }
    let v = stdout_json(&["power", "--method", "tost,alpha-tost,ctost"]);
    let rows = v["rows"].as_array().unwrap();
    for chunk in rows.chunks(3) {
        let p: Vec<f64> = chunk.iter().map(|r| r["power"].as_f64().unwrap()).collect();
        assert!(p[2] >= p[1] - 1e-12 && p[1] >= p[0] - 1e-12, "{chunk:?}");
    }
}

#[test]
fn table_header_contract() {
    let out = ctost(&["table", "--sigma-grid", "0.1", "--nu-grid", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "sigma1,nu2,alpha_c,strategy,c0,alpha0");
}

#[test]
fn help_documents_defaults() {
    for sub in ["assess", "adjust", "power", "size", "simulate", "table", "case-study"] {
        let out = ctost(&[sub, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("log(1.25)") && text.contains("0.22314355131420976"), "{sub}");
        assert!(text.contains("--alpha0") && text.contains("[default: 0.05]"), "{sub}");
    }
    let top = String::from_utf8(ctost(&["--help"]).stdout).unwrap();
    assert!(top.contains("log(1.25)") && top.contains("alpha0 = 0.05"));
}

#[test]
fn table_path_flag_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    let out = ctost(&["table", "--sigma-grid", "0.11,0.12,0.13", "--nu-grid", "6,7,8", "-o", table.to_str().unwrap()]);
    assert!(out.status.success());
    let args = ["adjust", "--theta-hat", "0", "--sigma1-hat", "0.12", "--nu2", "7", "--refined"];
    let quad = stdout_json(&args);
    let mut with_flag: Vec<&str> = args.to_vec();
    with_flag.extend(["--table-path", table.to_str().unwrap()]);
    let looked_up = stdout_json(&with_flag);
    assert_eq!(looked_up["adjustment"]["calibration_strategy"], "table-lookup");
    let a = quad["adjustment"]["alpha_c"].as_f64().unwrap();
    let b = looked_up["adjustment"]["alpha_c"].as_f64().unwrap();
    // (0.12, 7) is a grid node, so the lookup reproduces the quadrature value.
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");

    let env_out = Command::new(env!("CARGO_BIN_EXE_ctost"))
        .args(args)
        .env("CTOST_TABLE_PATH", &table)
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&env_out.stdout).unwrap();
    assert_eq!(v["adjustment"]["calibration_strategy"], "table-lookup");

    let missing = Command::new(env!("CARGO_BIN_EXE_ctost"))
        .args(args)
        .env("CTOST_TABLE_PATH", &table)
        .args(["--table-path", dir.path().join("nope.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2), "the flag must beat the environment");
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    let out = ctost(&["case-study", "-o", p.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
    assert_eq!(v["verdict"], "equivalent");
}
