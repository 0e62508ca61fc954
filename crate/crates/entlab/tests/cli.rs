use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn entlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entlab")).args(args).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn check<'a>(report: &'a Value, engine: &str, id: &str) -> &'a Value {
    report["engines"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["engine"] == engine)
        .and_then(|e| e["checks"].as_array().unwrap().iter().find(|c| c["check_id"] == id))
        .unwrap_or_else(|| panic!("{engine}/{id} missing"))
}

#[test]
fn dilation_run_reports_equality() {
    let out = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("gaussian-dilation.json");
    let o = entlab(&["run", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.path().join("gaussian-dilation");
    let report = read_json(&dir.join("report.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(check(&report, "quantile", "edi")["verdict"], "equality");
    assert_eq!(check(&report, "quantile", "epdi")["verdict"], "equality");
    assert!(report["engines"][0]["rigidity"]["applicable"].as_bool().unwrap());
    for f in ["series_quantile.csv", "path_quantile.csv", "margins/quantile_edi.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let path_csv = fs::read_to_string(dir.join("path_quantile.csv")).unwrap();
    assert_eq!(path_csv.lines().next(), Some("t,x,rho,phi"));
    assert_eq!(path_csv.lines().count(), 1 + 65 * 2048);
}

#[test]
fn sphere_run_has_positive_margins() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&scenarios().join("sphere-k1.json"));
    cfg["checks"] = serde_json::json!(["edi", "sturm", "jacobian"]);
    cfg["outputs"] = serde_json::json!({ "path": false });
    let file = out.path().join("sphere.json");
    fs::write(&file, cfg.to_string()).unwrap();
    let o = entlab(&["run", file.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let report = read_json(&out.path().join("sphere-k1/report.json"));
    assert_eq!(report["engines"][0]["params"]["K"].as_f64().unwrap(), 1.0);
    for id in ["edi", "sturm_2", "sturm_5"] {
        let c = check(&report, "quantile", id);
        assert_ne!(c["verdict"], "fail", "{id}");
        assert!(c["margin"].as_array().unwrap().iter().any(|m| m.as_f64().unwrap() > 1e-4), "{id}");
    }
    assert!(!out.path().join("sphere-k1/path_quantile.csv").exists());
}

#[test]
fn malformed_config_is_a_structured_error() {
    let out = tempfile::tempdir().unwrap();
    let file = out.path().join("bad.json");
    fs::write(
        &file,
        r#"{"name": "bad", "model": {"kind": "line", "n": 1, "domain": [-5, 5]}, "checks": ["edi"]}"#,
    )
    .unwrap();
    let o = entlab(&["run", file.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let report = read_json(&out.path().join("bad/report.json"));
    assert_eq!(report["status"], "error");
    assert!(report["error"].as_str().unwrap().contains("missing endpoints"));

    fs::write(&file, r#"{"name": "bad", "bogus": 1}"#).unwrap();
    let o = entlab(&["run", file.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["status"], "error");
}

#[test]
fn empty_manifest() {
    let out = tempfile::tempdir().unwrap();
    let file = out.path().join("manifest.json");
    fs::write(&file, r#"{"scenarios": []}"#).unwrap();
    let o = entlab(&["battery", file.to_str().unwrap(), "--out-dir", out.path().join("runs").to_str().unwrap()]);
    assert!(o.status.success());
    let summary = read_json(&out.path().join("runs/summary.json"));
    assert!(summary["rows"].as_array().unwrap().is_empty());
}

#[test]
fn falsification_battery_fails_one_scenario() {
    let out = tempfile::tempdir().unwrap();
    let runs = out.path().join("runs");
    let manifest = scenarios().join("manifest-falsification.json");
    let o = entlab(&["battery", manifest.to_str().unwrap(), "--out-dir", runs.to_str().unwrap()]);
    assert!(!o.status.success());
    let summary = read_json(&runs.join("summary.json"));
    let scen = summary["scenarios"].as_array().unwrap();
    assert_eq!(scen.len(), 13);
    for s in scen {
        let expect_fail = s["scenario"] == "falsification-hyperbolic";
        assert_eq!(s["passed"].as_bool().unwrap(), !expect_fail, "{}", s["scenario"]);
    }
    let o = entlab(&["report", runs.to_str().unwrap()]);
    assert!(!o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL falsification-hyperbolic (expected to fail)"));
}

#[test]
fn runs_are_deterministic() {
    let out = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("mixture.json");
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        let dir = out.path().join(tag);
        let o = entlab(&["run", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap(), "--grid-size", "512"]);
        assert!(o.status.success());
        files.push(dir.join("mixture"));
    }
    for f in ["series_quantile.csv", "series_hopf_lax.csv", "path_hopf_lax.csv", "margins/quantile_edi.csv"] {
        assert_eq!(fs::read(files[0].join(f)).unwrap(), fs::read(files[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn w_sign_flag_selects_the_identity() {
    let out = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("weighted-finite-m.json");
    let base = ["run", cfg.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()];
    assert!(entlab(&[&base[..], &["--w-sign", "plus"]].concat()).status.success());
    let o = entlab(&[&base[..], &["--w-sign", "minus"]].concat());
    assert!(!o.status.success());
    let report = read_json(&out.path().join("weighted-finite-m/report.json"));
    assert_eq!(check(&report, "quantile", "niw")["verdict"], "fail");
}
