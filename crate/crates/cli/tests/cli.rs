use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{
  "num_clients": 10,
  "clients_per_round": 2,
  "rounds": 12,
  "selector": "hics",
  "dataset": {"kind": "blobs", "num_classes": 4, "per_class_n": 40, "dim": 6, "spread": 2.0},
  "alphas": [0.001, 0.5],
  "hidden": [8],
  "eval_every": 3,
  "train": {"learning_rate": 0.05, "local_epochs": 1, "batch_size": 8, "optimizer": {"kind": "sgd"}}
}"#;

fn fedsim(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedsim"));
    cmd.current_dir(dir).args(args).env_remove("FEDSIM_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("fedsim runs")
}

fn setup(config: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, config).unwrap();
    (dir, path)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let o = fedsim(dir.path(), &["run", "--config", "nope.json"], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_writes_one_row_per_round_and_a_manifest() {
    let (dir, _) = setup(SMALL);
    let o = fedsim(dir.path(), &["run", "--config", "config.json", "--out", "out", "--seed", "3"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/metrics_hics_seed3.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "round,selector,selected_ids,avg_train_loss,std_train_loss,test_accuracy,h_m_diag,gamma_t");
    assert_eq!(lines.len(), 13);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest_hics_seed3.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([3]));
}

#[test]
fn selector_override_changes_the_manifest_echo() {
    let (dir, _) = setup(SMALL);
    let o = fedsim(dir.path(), &["run", "--config", "config.json", "--out", "o", "--selector", "pow-d"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/manifest_pow_d_seed0.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["selector"], "pow_d");
    assert_eq!(m["cost"]["selector"], "pow_d");
}

#[test]
fn unknown_keys_are_all_reported() {
    let bad = SMALL.replacen("\"rounds\": 12,", "\"rounds\": 12, \"roundz\": 3, \"extra\": true,", 1);
    let (dir, _) = setup(&bad);
    let o = fedsim(dir.path(), &["run", "--config", "config.json", "--out", "o"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("'roundz'") && err.contains("'extra'"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn manifest_as_config_reproduces_the_run() {
    let (dir, _) = setup(SMALL);
    assert!(fedsim(dir.path(), &["run", "--config", "config.json", "--out", "a", "--seed", "5"], &[]).status.success());
    let o = fedsim(dir.path(), &["run", "--config", "a/manifest_hics_seed5.json", "--out", "b"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(dir.path().join("a/metrics_hics_seed5.csv")).unwrap();
    let b = fs::read(dir.path().join("b/metrics_hics_seed5.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_the_csv() {
    let (dir, _) = setup(SMALL);
    for (sel, threads, out) in [("hics", "1", "t1"), ("hics", "3", "t3"), ("div_fl", "1", "d1"), ("div_fl", "3", "d3")] {
        let o = fedsim(
            dir.path(),
            &["run", "--config", "config.json", "--out", out, "--selector", sel],
            &[("FEDSIM_THREADS", threads)],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("t1/metrics_hics_seed0.csv"), read("t3/metrics_hics_seed0.csv"));
    assert_eq!(read("d1/metrics_div_fl_seed0.csv"), read("d3/metrics_div_fl_seed0.csv"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let (dir, _) = setup(SMALL);
    let o = fedsim(dir.path(), &["run", "--config", "config.json"], &[("FEDSIM_THREADS", "many")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_stay_inside_the_out_dir() {
    let (dir, _) = setup(SMALL);
    for cmd in ["run", "partition", "estimate-entropy", "validate-assumption"] {
        let o = fedsim(dir.path(), &[cmd, "--config", "config.json", "--out", "only/here"], &[]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let mut top: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    top.sort();
    assert_eq!(top, vec!["config.json", "only"]);
}

#[test]
fn default_out_dir_is_used_without_flag() {
    let (dir, _) = setup(SMALL);
    assert!(fedsim(dir.path(), &["partition", "--config", "config.json"], &[]).status.success());
    assert!(dir.path().join("fedsim-out/partition_seed0.json").exists());
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn partition_cohorts_and_entropies() {
    let cfg = SMALL.replace("\"num_clients\": 10", "\"num_clients\": 20");
    let (dir, _) = setup(&cfg);
    let mut args = vec!["partition", "--config", "config.json", "--out", "p"];
    let seeds: Vec<String> = (0..20).map(|s| s.to_string()).collect();
    for s in &seeds {
        args.extend(["--seed", s.as_str()]);
    }
    let o = fedsim(dir.path(), &args, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (mut low, mut high) = (0.0, 0.0);
    for s in &seeds {
        let rows = read_rows(&dir.path().join(format!("p/client_entropy_seed{s}.csv")));
        assert_eq!(rows.len(), 20);
        let mut counts = [0usize; 2];
        for r in &rows {
            let alpha: f64 = r[1].parse().unwrap();
            let h: f64 = r[3].parse().unwrap();
            assert!((0.0..=4f64.ln() + 1e-12).contains(&h));
            if alpha == 0.001 {
                counts[0] += 1;
                low += h;
            } else {
                counts[1] += 1;
                high += h;
            }
        }
        assert_eq!(counts, [10, 10]);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("p/partition_seed{s}.json"))).unwrap())
                .unwrap();
        assert_eq!(json.as_array().unwrap().len(), 20);
    }
    assert!(high > low, "balanced cohort {high} vs skewed {low}");
}

#[test]
fn estimate_entropy_csv_layout() {
    let (dir, _) = setup(SMALL);
    let o = fedsim(dir.path(), &["estimate-entropy", "--config", "config.json", "--out", "e"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("e/entropy_estimates_seed0.csv")).unwrap();
    assert!(text.starts_with("client_id,true_entropy,estimated_entropy,round\n"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn validate_assumption_outputs() {
    let (dir, _) = setup(SMALL);
    let o = fedsim(dir.path(), &["validate-assumption", "--config", "config.json", "--out", "v"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_rows(&dir.path().join("v/assumption_scatter_seed0.csv"));
    let supers: Vec<_> = rows.iter().filter(|r| r[0].is_empty()).collect();
    assert!(!supers.is_empty());
    for r in supers {
        let h: f64 = r[2].parse().unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-9);
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
    }
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/envelope_seed0.json")).unwrap()).unwrap();
    assert!(rep["fit"]["coverage"].as_f64().unwrap() >= 0.9);
}

#[test]
fn empty_federation_fails_validation() {
    let (dir, _) = setup(&SMALL.replace("\"num_clients\": 10", "\"num_clients\": 0"));
    let o = fedsim(dir.path(), &["validate-assumption", "--config", "config.json", "--out", "v"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("v").exists());
}

/// Linear ramp through `target` between rounds `cross - 1` and `cross`.
fn ramp_csv(path: &Path, selector: &str, cross: usize, slope: f64) {
    let mut text = String::from("round,selector,selected_ids,avg_train_loss,std_train_loss,test_accuracy,h_m_diag,gamma_t\n");
    for t in 1..=200 {
        let acc = 0.75 + slope * (t as f64 - cross as f64 + 0.5);
        text.push_str(&format!("{t},{selector},0;1,0.5,0.1,{acc},0.3,\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn summarize_reproduces_the_149_vs_60_speedup() {
    let dir = TempDir::new().unwrap();
    ramp_csv(&dir.path().join("r.csv"), "random", 149, 0.001);
    ramp_csv(&dir.path().join("h.csv"), "hics", 60, 0.002);
    let o = fedsim(dir.path(), &["summarize", "r.csv", "h.csv", "--target-acc", "0.75", "--out", "s"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let hics = table.lines().find(|l| l.starts_with("hics")).unwrap();
    assert!(hics.contains(" 60 ") && hics.contains("2.5x"), "{table}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/summary.json")).unwrap()).unwrap();
    let row = json["rows"].as_array().unwrap().iter().find(|r| r["selector"] == "hics").unwrap();
    assert!((row["speedup"].as_f64().unwrap() - 149.0 / 60.0).abs() < 1e-12);
}

#[test]
fn summarize_without_random_fails() {
    let dir = TempDir::new().unwrap();
    ramp_csv(&dir.path().join("h.csv"), "hics", 60, 0.002);
    let o = fedsim(dir.path(), &["summarize", "h.csv", "--target-acc", "0.75"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn summarize_unreached_target_is_na() {
    let dir = TempDir::new().unwrap();
    ramp_csv(&dir.path().join("r.csv"), "random", 149, 0.001);
    let o = fedsim(dir.path(), &["summarize", "r.csv", "--target-acc", "0.99"], &[]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("n/a"));
}
