//! End-to-end runs of the `circadia` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circadia::io::save_cohorts;
use circadia::{generate_datasets, SimSetting, Study};
use serde_json::Value;

fn circadia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circadia"))
        .args(args)
        .env_remove("CIRCADIA_THREADS")
        .output()
        .unwrap()
}

fn two_cohort_csv(dir: &Path) -> PathBuf {
    let setting = SimSetting::parse(Study::TwoCohort, "K1,size=small").unwrap();
    let data = generate_datasets(&setting, 1, 0, 3).unwrap();
    let path = dir.join("data.csv");
    save_cohorts(&data.cohorts(), &path).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn fit_reports_both_parametrizations() {
    let tmp = tempfile::tempdir().unwrap();
    let input = two_cohort_csv(tmp.path());
    let out = tmp.path().join("fit");
    let o = circadia(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--order",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let cohorts = r["cohorts"].as_array().unwrap();
    assert_eq!(cohorts.len(), 2);
    assert_eq!(cohorts[0]["cohort"], "control");
    for c in cohorts {
        let est = c["estimates"].as_array().unwrap();
        assert_eq!(est[0]["method"], "sts");
        assert_eq!(est[0]["population_vector"].as_array().unwrap().len(), 5);
        assert_eq!(est[1]["method"], "rts");
        assert_eq!(est[1]["population_vector"].as_array().unwrap().len(), 7);
        assert_eq!(est[0]["midline"], est[1]["midline"]);
        assert_eq!(est[1]["harmonics"].as_array().unwrap().len(), 2);
    }
    assert_eq!(r["provenance"]["order"], 2);
    assert!(out.join("report.txt").exists());
    assert!(out.join("fitted-case-rts.csv").exists());
    assert!(String::from_utf8(o.stdout).unwrap().contains("cohort case"));
}

#[test]
fn test_command_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let input = two_cohort_csv(tmp.path());
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = circadia(&[
            "--threads",
            threads,
            "test",
            "--input",
            input.to_str().unwrap(),
            "--order",
            "1",
            "--replicates",
            "49",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("report.json")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
    let r: Value = serde_json::from_slice(&a).unwrap();
    let tests = r["tests"].as_array().unwrap();
    // zero amplitudes per cohort, then midlines and rhythms, each for both methods
    assert_eq!(tests.len(), 8);
    assert!(tests.iter().all(|t| t["result"]["replicates"] == 49));
}

#[test]
fn select_then_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let input = two_cohort_csv(tmp.path());
    let out = tmp.path().join("sel");
    let o = circadia(&[
        "fit",
        "--input",
        input.to_str().unwrap(),
        "--select",
        "--max-order",
        "2",
        "--replicates",
        "19",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let k = r["selection"]["harmonized_order"].as_u64().unwrap();
    assert!(k <= 2);
    assert_eq!(r["selection"]["runs"].as_array().unwrap().len(), 4);
    assert_eq!(r["provenance"]["order"], k);
}

#[test]
fn simulate_writes_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = circadia(&[
        "simulate",
        "--setting",
        "K1,size=small",
        "--trials",
        "3",
        "--replicates",
        "9",
        "--datasets",
        "1,3",
        "--dump-data",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["trials"], 3);
    assert_eq!(r["datasets"], serde_json::json!([1, 3]));
    assert!(out.join("curves/dataset1-rts-zero-amplitudes.csv").exists());
    assert!(out.join("curves/dataset3-sts-zero-amplitudes.csv").exists());
    assert!(out.join("trials.json").exists());
    assert!(out.join("trial0-dataset1.csv").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let o = circadia(&["fit", "--input", missing.to_str().unwrap(), "--order", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "cohort,subject,time,value\nc,a,0,1\nc,a,1,oops\n").unwrap();
    let o = circadia(&["fit", "--input", bad.to_str().unwrap(), "--order", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = circadia(&["--threads", "zero", "simulate"]);
    assert!(!o.status.success());
    let o = circadia(&[
        "fit",
        "--input",
        bad.to_str().unwrap(),
        "--order",
        "1",
        "--select",
    ]);
    assert!(!o.status.success());
}
