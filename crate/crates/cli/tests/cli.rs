use std::path::Path;
use std::process::{Command, Output};

fn yamabe(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_yamabe"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn verify_weyl_reports_four_families() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(dir.path(), "n = 25\n", &["verify-weyl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["command"], "verify-weyl");
    assert_eq!(v["config"]["n"], 25);
    assert_eq!(v["config"]["seed"], 1);
    let res = v["result"]["residuals"].as_object().unwrap();
    for key in ["pair", "antisymmetry", "bianchi", "trace"] {
        assert!(res[key].as_f64().unwrap() < 1e-12);
    }
    assert_eq!(v["result"]["passed"], true);
}

#[test]
fn small_dimension_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(dir.path(), "n = 3\n", &["verify-weyl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n >= 4"), "{}", stderr(&o));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(dir.path(), "n = 5\nkk = [1]\n", &["verify-weyl"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("kk") && e.contains("line 2"), "{e}");
    let o = yamabe(dir.path(), "n = \"five\"\n", &["verify-weyl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn certify_norms_grid_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "n = 5\nk = [4, 8, 16]\nr = [8.0, 32.0]\nseed = 3\n";
    let a = yamabe(dir.path(), cfg, &["--format", "csv", "certify-norms"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let text = stdout(&a);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6 * 3);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "lemma,k,r,s,min_ratio,max_ratio,n_probes,seed");
    assert!(rows.iter().all(|r| r.ends_with(",3")));
    assert!(text.contains("# seed = 3"));
    let b = yamabe(dir.path(), cfg, &["--format", "csv", "certify-norms"]);
    assert_eq!(a.stdout, b.stdout);
    let c = yamabe(
        dir.path(),
        cfg,
        &["--format", "csv", "--sequential", "certify-norms"],
    );
    assert_eq!(a.stdout, c.stdout);
    let d = yamabe(
        dir.path(),
        cfg,
        &["--format", "csv", "--workers", "1", "certify-norms"],
    );
    assert_eq!(a.stdout, d.stdout);
}

#[test]
fn band_drift_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(
        dir.path(),
        "n = 25\nk = [4, 32]\nr = [8.0, 256.0]\n",
        &["certify-norms"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("step_function_band_drift"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(
        dir.path(),
        "n = 5\nk = [4]\nr = [8.0]\n",
        &["--seed", "9", "certify-norms"],
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["result"]["step_function"][0]["seed"], 9);
}

#[test]
fn volume_scan_table_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = yamabe(
        dir.path(),
        "n = 6\nk = [2, 3, 4, 5]\nr_over_k = 8.0\n",
        &[
            "--format",
            "csv",
            "--out",
            out.to_str().unwrap(),
            "volume-scan",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("volume-scan.csv")).unwrap();
    assert_eq!(data_rows(&text).len(), 4);
    assert!(text.lines().any(|l| l.starts_with("# slope = ")));
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn energy_in_paper_regime_keeps_scaled_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        "n = 25\nk = [6]\nr_rule = \"paper\"\ntau0 = -7.0407286864\nsamples = 8\nper_piece = 4\n";
    let o = yamabe(dir.path(), cfg, &["--format", "csv", "energy"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 7);
        let m: f64 = f[4].parse().unwrap();
        assert!(m.is_finite());
        if f[6] != "I_delta" {
            assert_ne!(f[2], "0", "{row}");
        }
    }
    let j = yamabe(dir.path(), cfg, &["energy"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&j)).unwrap();
    assert_eq!(v["result"]["exponents"]["admissible"], true);
}

#[test]
fn energy_below_tuning_range_needs_tau0() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(dir.path(), "n = 6\nk = [3]\nr = [10.0]\n", &["energy"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau0"), "{}", stderr(&o));
}

#[test]
fn tune_tau0_reports_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let o = yamabe(dir.path(), "n = 25\n", &["tune-tau0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let tau = v["result"]["tau0_star"].as_f64().unwrap();
    assert!((tau + 7.0407286864).abs() < 1e-8, "{tau}");
    assert!(v["result"]["min_eigenvalue"].as_f64().unwrap() > 0.0);
}

#[test]
fn reduced_energy_writes_profile_and_hessian() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = "n = 25\ntau0 = -7.0407286864\nghat_samples = 256\nlams = [0.9, 1.0]\n";
    let o = yamabe(
        dir.path(),
        cfg,
        &[
            "--format",
            "csv",
            "--out",
            out.to_str().unwrap(),
            "reduced-energy",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let p = std::fs::read_to_string(out.join("reduced-energy.csv")).unwrap();
    assert_eq!(data_rows(&p).len(), 2);
    let h = std::fs::read_to_string(out.join("reduced-energy-hessian.csv")).unwrap();
    assert_eq!(data_rows(&h).len(), 26);
}

#[test]
fn certify_all_exit_status_lists_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ok = yamabe(dir.path(), "only = [1]\n", &["certify-all"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(stderr(&ok).contains("[PASS]  1 weyl_algebra"));
    let bad = yamabe(dir.path(), "only = [1, 6]\n", &["certify-all"]);
    assert_eq!(bad.status.code(), Some(1));
    let e = stderr(&bad);
    assert!(e.contains("failed certificates: newtonian_decay"), "{e}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(v["result"]["criteria"].as_array().unwrap().len(), 2);
}
