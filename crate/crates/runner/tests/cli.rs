use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rqw(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rqw"))
        .args(args)
        .env("RQW_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn error_report(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).expect("stderr is a JSON report")
}

const LOCALIZED: &str = r#"{
    // C_π with uniform phases
    "schema_version": 1, "d": 1, "L": 8,
    "coin": {"kind": "permutation"},
    "horizon": 400, "samples": 50, "seed": 3
}"#;

const PERTURBED: &str = r#"{
    "schema_version": 1, "d": 1, "L": 12,
    "coin": {"kind": "perturbed", "delta": 0.1, "seed": 9},
    "z_grid": {"radii": [0.999, 1.001], "angles": 2},
    "samples": 12, "seed": 4, "bootstrap_resamples": 50,
    "appendix": {"radii": [0.9, 0.99], "grid": 8192, "dims": [4, 6], "graf_sizes": [8, 10],
                 "graf_distances": [2, 4], "backgrounds": 1}
}"#;

#[test]
fn spectrum_matches_oracle_on_every_block() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LOCALIZED);
    let dir = run_dir(&rqw(&["spectrum", "--config", cfg.to_str().unwrap()], tmp.path()));
    let s = summary(&dir);
    assert_eq!(s["realizations"], 50);
    assert_eq!(s["match_fraction"], 1.0);
    assert!(s["max_mismatch"].as_f64().unwrap() <= 1e-10);
    assert!(dir.starts_with(tmp.path()));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("spectrum-"));
}

#[test]
fn spectrum_rejects_a_non_permutation_coin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", PERTURBED);
    let o = rqw(&["spectrum", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_report(&o)["errors"][0]["field"], "coin");
}

#[test]
fn localized_transport_has_zero_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LOCALIZED);
    let dir = run_dir(&rqw(&["transport", "--config", cfg.to_str().unwrap()], tmp.path()));
    let s = summary(&dir);
    assert!(s["exponent"].as_f64().unwrap().abs() < 0.05, "{s}");
    assert!(s["window_l"].as_u64().unwrap() >= 403);
    let csv = fs::read_to_string(dir.join("results/transport.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 402);
}

#[test]
fn out_of_range_exponent_is_a_field_level_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = LOCALIZED.replace("\"seed\": 3", "\"seed\": 3, \"s\": [1.5]");
    let cfg = write_config(tmp.path(), "c.json", &body);
    let o = rqw(&["green", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let r = error_report(&o);
    assert_eq!(r["kind"], "config");
    assert_eq!(r["errors"][0]["field"], "s[0]");
    assert!(fs::read_dir(tmp.path()).unwrap().all(|e| e.unwrap().path().is_file()));
}

#[test]
fn malformed_json_and_missing_config_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{ \"d\": ");
    assert_eq!(rqw(&["gap", "--config", cfg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    let o = rqw(&["gap"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_report(&o)["errors"][0]["field"], "--config");
}

fn bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join("results"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.push(("summary.json".into(), fs::read(dir.join("summary.json")).unwrap()));
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", PERTURBED);
    let c = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let da = run_dir(&rqw(&["green", "--config", c, "--threads", "1", "--out", a.to_str().unwrap()], tmp.path()));
    let db = run_dir(&rqw(&["green", "--config", c, "--threads", "2", "--out", b.to_str().unwrap()], tmp.path()));
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(bodies(&da), bodies(&db));

    let ma: Value = serde_json::from_str(&fs::read_to_string(da.join("manifest.json")).unwrap()).unwrap();
    let mb: Value = serde_json::from_str(&fs::read_to_string(db.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["task_seeds"], mb["task_seeds"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
}

#[test]
fn manifest_inventories_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", PERTURBED);
    let dir = run_dir(&rqw(&["correlator", "--config", cfg.to_str().unwrap()], tmp.path()));
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 4);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["task_seeds"]["realizations"].as_array().unwrap().len(), 12);
    let listed: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for p in ["results/correlator.csv", "results/correlator_cells.csv", "summary.json"] {
        assert!(listed.contains(&p), "{p} missing from {listed:?}");
        let entry = m["files"].as_array().unwrap().iter().find(|f| f["path"] == p).unwrap();
        assert_eq!(entry["bytes"].as_u64().unwrap(), fs::metadata(dir.join(p)).unwrap().len());
    }
    let head = fs::read_to_string(dir.join("results/correlator.csv")).unwrap();
    assert!(head.contains(&format!("# config_hash {}", m["config_hash"].as_str().unwrap())));
    assert!(head.contains("# master_seed 4"));
}

#[test]
fn seed_override_changes_run_and_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LOCALIZED);
    let c = cfg.to_str().unwrap();
    let a = run_dir(&rqw(&["gap", "--config", c], tmp.path()));
    let b = run_dir(&rqw(&["gap", "--config", c, "--seed", "99"], tmp.path()));
    assert_ne!(a, b);
    let m: Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 99);
    assert_eq!(m["config"]["seed"], 99);
}

#[test]
fn green_reports_a_decay_fit_per_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let body = PERTURBED.replace("\"seed\": 4,", "\"seed\": 4, \"s\": [0.3, 0.6],");
    let cfg = write_config(tmp.path(), "c.json", &body);
    let dir = run_dir(&rqw(&["green", "--config", cfg.to_str().unwrap()], tmp.path()));
    let s = summary(&dir);
    let res = s["results"].as_array().unwrap();
    assert_eq!(res.len(), 2);
    for r in res {
        assert!(r["fit"]["gamma"].as_f64().unwrap() > 0.0, "{r}");
    }
    assert!(dir.join("results/green_s0.3.csv").exists());
    assert!((s["coin"]["distance_to_permutation_coin"].as_f64().unwrap() - 0.1).abs() < 1e-10);
}

#[test]
fn gap_uses_the_oracle_for_permutation_coins() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LOCALIZED);
    let dir = run_dir(&rqw(&["gap", "--config", cfg.to_str().unwrap()], tmp.path()));
    let s = summary(&dir);
    assert_eq!(s["method"], "orbit-oracle");
    let probs: Vec<f64> = s["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["close_probability"].as_f64().unwrap())
        .collect();
    assert!(probs.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn appendix_suite_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", PERTURBED);
    let dir = run_dir(&rqw(&["appendix", "--config", cfg.to_str().unwrap()], tmp.path()));
    let s = summary(&dir);
    for row in s["poisson"].as_array().unwrap() {
        if row["function"] == "1" {
            assert!(row["error"].as_f64().unwrap() < 1e-8);
        }
    }
    assert_eq!(s["graf"]["fitted_k"].as_array().unwrap().len(), 2);
    assert!(s["conditional_moments"]["spread"].is_object());
    for f in ["poisson.csv", "graf.csv", "conditional.csv"] {
        assert!(dir.join("results").join(f).exists(), "{f}");
    }
}

#[test]
fn family_coin_distance_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let body = LOCALIZED.replace("{\"kind\": \"permutation\"}", "{\"kind\": \"family\", \"t\": 0.6, \"r\": 0.8}");
    let cfg = write_config(tmp.path(), "c.json", &body);
    let o = rqw(&["transport", "--config", cfg.to_str().unwrap()], tmp.path());
    let dir = run_dir(&o);
    let d = summary(&dir)["coin"]["distance_to_permutation_coin"].as_f64().unwrap();
    assert!((d - (0.36f64 + 0.04).sqrt()).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coin distance"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        rqw_runner::ExperimentConfig::from_path(&p).unwrap_or_else(|e| panic!("{}: {:?}", p.display(), e));
        n += 1;
    }
    assert!(n >= 3);
}
