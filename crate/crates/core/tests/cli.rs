use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fogtbma"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], config_path: &Path) -> Output {
    bin().args(&args[..1]).arg("--config").arg(config_path).args(&args[1..]).output().unwrap()
}

#[test]
fn validate_accepts_shipped_configs() {
    for name in ["snr_sweep.json", "required_snr.json", "roc.json"] {
        let out = run(&["validate"], &config(name));
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
    }
}

#[test]
fn validate_lists_violations_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("snr_sweep.json"))
        .unwrap()
        .replace("\"rho\": 0.1", "\"rho\": 1.5, \"codebook_kind\": \"orthogonal\"");
    std::fs::write(&path, text).unwrap();
    let out = run(&["validate"], &path);
    assert_eq!(out.status.code(), Some(2));
    let listed = String::from_utf8_lossy(&out.stdout);
    assert!(listed.lines().count() >= 2, "{listed}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.json");
    let text = std::fs::read_to_string(config("roc.json")).unwrap().replace("\"trials\"", "\"trails\"");
    std::fs::write(&path, text).unwrap();
    let out = run(&["roc"], &path);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trails"));
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["snr-sweep"], Path::new("/nonexistent/spec.json"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn roc_writes_csv_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("roc.csv");
    let dump = dir.path().join("trials.jsonl");
    let out = run(
        &["roc", "--trials", "20", "--seed", "3", "--debug-trace", "--out", out_path.to_str().unwrap(), "--dump-trials", dump.to_str().unwrap()],
        &config("roc.json"),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scheme,threshold,p_fp,p_fn,b,p_fp_ci,p_fn_ci"));
    // two schemes, two budgets, 221 thresholds
    assert_eq!(lines.count(), 4 * 221);

    let trace = std::fs::read_to_string(dir.path().join("roc.csv.trace.csv")).unwrap();
    assert!(trace.starts_with("scheme,b,n,snr_db,iteration,residual,mean_tau_x"));
    assert!(trace.lines().count() > 4);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("roc.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "roc");
    assert_eq!(meta["spec"]["master_seed"], 3);
    assert_eq!(meta["spec"]["trials"], 20);

    let records: Vec<serde_json::Value> = std::fs::read_to_string(&dump)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 20);
    assert_eq!(records[0]["y"].as_array().unwrap().len(), 4);
    assert_eq!(records[0]["y"][0].as_array().unwrap().len(), 32);
}

#[test]
fn snr_sweep_to_stdout_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let text = std::fs::read_to_string(config("snr_sweep.json"))
        .unwrap()
        .replace("[-10, -7.5, -5, -2.5, 0, 2.5, 5, 7.5, 10, 12.5, 15]", "[0, 10]");
    std::fs::write(&path, text).unwrap();
    let out = run(&["snr-sweep", "--trials", "30"], &path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][..10], ["scheme", "b", "n", "snr_db", "pe", "p_fp", "p_fn", "ci", "trials", "seed"]);
    assert_eq!(rows.len(), 1 + 2 * 3);
    let baseline: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "qf_unquantized").collect();
    assert!(baseline.iter().all(|r| r[1] == "inf"));
    for r in &rows[1..] {
        assert_eq!(r.len(), rows[0].len());
        assert_eq!(r[8], "30");
        for field in &r[4..8] {
            let v: f64 = field.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn required_snr_reports_unreachable_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    let text = std::fs::read_to_string(config("required_snr.json"))
        .unwrap()
        .replace("[32, 64, 128, 256]", "[16]")
        .replace("[16, 32]", "[16]")
        .replace("[\"qf_test_channel\"]", "[\"qf_uniform\"]");
    std::fs::write(&path, text).unwrap();
    let out = run(&["required-snr", "--trials", "10"], &path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "scheme,b,n,required_snr_db\nqf_uniform,16,16,unreachable\n");
}
