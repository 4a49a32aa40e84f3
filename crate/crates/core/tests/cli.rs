use std::process::{Command, Output};

fn injlab(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_injlab"));
    c.args(args);
    match threads {
        Some(t) => c.env("INJLAB_THREADS", t),
        None => c.env_remove("INJLAB_THREADS"),
    };
    c.output().expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

#[test]
fn constants_report_json() {
    let v = stdout_json(&injlab(&["constants", "--p", "3", "--d", "10", "--field", "real"], None));
    let e0 = v["result"]["e0"].as_f64().unwrap();
    assert!((e0 - 1.655).abs() < 5e-3, "e0 = {e0}");
    assert_eq!(v["schema_version"], "injlab.manifest.v1");
    assert_eq!(v["config"]["p"], 3);
    assert_eq!(v["row_count"], 1);
    assert!(v["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn inj_norm_csv_is_reproducible_across_runs_and_threads() {
    let args = ["inj-norm", "--p", "2", "--d", "6", "--trials", "5", "--seed", "1", "--out", "csv"];
    let a = injlab(&args, None);
    let b = injlab(&args, Some("1"));
    let c = injlab(&args, Some("3"));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("trial,value,value_over_sqrt_d,"));
}

#[test]
fn rmt_rows_have_bounded_operator_norm() {
    let o = injlab(&["rmt", "--model", "bhgoe", "--d", "199", "--p", "3", "--trials", "10", "--seed", "2", "--out", "csv"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == "op_norm").unwrap();
    let bound = 2.0 * (2.0f64 / 3.0).sqrt() + 0.15;
    let norms: Vec<f64> = lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect();
    assert_eq!(norms.len(), 10);
    assert!(norms.iter().all(|&n| n <= bound));
}

#[test]
fn out_path_writes_manifest_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = injlab(
        &["sample-tensor", "--p", "3", "--d", "4", "--trials", "3", "--field", "complex", "--out-path", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["row_count"], 3);
    assert_eq!(m["data_file"], "data.json");
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("data.json")).unwrap()).unwrap();
    assert_eq!(d["schema_version"], "injlab.sample-tensor.v1");
    assert_eq!(d["rows"].as_array().unwrap().len(), 3);
    let summary = m["summary"].as_array().unwrap();
    assert!(summary.iter().any(|s| s["column"] == "hs_norm_sq"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "p = 4\nd = 3\ntrials = 2\nout = \"csv\"\n").unwrap();
    let o = injlab(&["sample-tensor", "--config", cfg.to_str().unwrap(), "--trials", "5"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["constants", "--p", "1"],
        vec!["kac-rice", "--interval", "3:1"],
        vec!["inj-norm", "--trials", "0"],
        vec!["nonsense"],
        vec!["constants", "--field", "quaternion"],
    ] {
        let o = injlab(&args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let o = injlab(&["constants"], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = injlab(&["constants", "--out-path", blocker.join("sub").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let o = injlab(&["sample-tensor", "--p", "6", "--d", "40"], None);
    assert_eq!(o.status.code(), Some(2), "oversized requests are usage errors");
}

#[test]
fn kac_rice_p2_matches_exact_count() {
    let v = stdout_json(&injlab(&["kac-rice", "--p", "2", "--d", "2", "--samples", "4000", "--seed", "5"], None));
    let lb = v["result"]["log_bound"].as_f64().unwrap();
    assert!((lb.exp() / 8.0 - 1.0).abs() < 0.1, "{}", lb.exp());
}

#[test]
fn audit_reports_every_pair() {
    let o = injlab(&["audit-covariance", "--p", "2", "--d", "3", "--samples", "2000", "--out", "csv"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    // value, 4 gradient entries and 10 Hessian entries: 15 variables, 120 pairs
    assert_eq!(text.lines().count(), 121);
}
