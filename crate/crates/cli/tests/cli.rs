use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"{
  "task": {"num_classes": 3, "n": 1024, "informative_span": [312, 712], "fade": 16,
           "distractor_tones": 4, "train_size": 48, "test_size": 24},
  "train": {"r": 64.0, "epochs": 2, "batch_size": 16}
}"#;

fn maskwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskwin"))
        .args(args)
        .env_remove("MASKWIN_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_owned).collect()
}

fn train_into(tmp: &TempDir, config: &str, run: &str) -> std::path::PathBuf {
    let out = tmp.path().join(run);
    let res = maskwin(&["train", "--config", config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    out
}

#[test]
fn train_writes_one_row_per_epoch() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY);
    let run = train_into(&tmp, &cfg, "run");
    let header = fs::read_to_string(run.join("runlog.csv")).unwrap();
    assert!(header.starts_with("epoch,m_samples,m_ms,s_bins,s_hz,train_loss,test_acc,penalty,mac_ratio\n"));
    assert_eq!(csv_rows(&run.join("runlog.csv")).len(), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["epochs"], 2);
    assert!(summary["energy"]["mac_ratio_vs_reference"].as_f64().unwrap() <= 1.0);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY);
    let first = train_into(&tmp, &cfg, "a");
    let resolved = first.join("resolved_config.json");
    let second = train_into(&tmp, resolved.to_str().unwrap(), "b");
    assert_eq!(
        fs::read(first.join("runlog.csv")).unwrap(),
        fs::read(second.join("runlog.csv")).unwrap()
    );
}

#[test]
fn misspelled_key_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"train": {"lamda": 0.1}}"#);
    let res = maskwin(&["train", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("train.lamda"), "{}", stderr(&res));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let res = maskwin(&["train", "--config", "/nonexistent/c.json", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn seed_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY);
    let out = tmp.path().join("run");
    let res = Command::new(env!("CARGO_BIN_EXE_maskwin"))
        .args(["train", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("MASKWIN_SEED", "42")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["seed"], 42);

    let res = Command::new(env!("CARGO_BIN_EXE_maskwin"))
        .args(["train", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("MASKWIN_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("MASKWIN_SEED"));
}

#[test]
fn grid_covers_every_pair() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{
      "task": {"num_classes": 3, "n": 1024, "informative_span": [312, 712], "fade": 16,
               "distractor_tones": 4, "train_size": 48, "test_size": 24},
      "train": {"r": 64.0, "epochs": 1, "batch_size": 16}
    }"#);
    let out = tmp.path().join("grid");
    let res = maskwin(&[
        "grid", "--config", &cfg, "--m-grid", "512,1024", "--s-grid", "300,449", "--out",
        out.to_str().unwrap(), "--jobs", "2",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows = csv_rows(&out.join("grid.csv"));
    assert_eq!(rows.len(), 4);
    let best: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("best.json")).unwrap()).unwrap();
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let f: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect();
    assert_eq!(pairs, vec![(512.0, 300.0), (512.0, 449.0), (1024.0, 300.0), (1024.0, 449.0)]);
    let best = (best["m"].as_f64().unwrap(), best["s"].as_f64().unwrap());
    assert!(pairs.contains(&best), "{best:?} not in {pairs:?}");
}

#[test]
fn empty_grid_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TINY);
    let res = maskwin(&["grid", "--config", &cfg, "--m-grid", "", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
}

#[test]
fn gradcheck_passes_and_its_negative_control_fails() {
    let ok = maskwin(&["gradcheck", "--configs", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));

    let bad = maskwin(&["gradcheck", "--configs", "3", "--corrupt", "0.01"]);
    assert_eq!(bad.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    let failed: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(failed.len() >= 6, "{stdout}");
    assert!(failed.iter().all(|l| l.split_whitespace().nth(1).is_some()));
}

#[test]
fn report_summarizes_runs_sorted_by_lambda() {
    let tmp = TempDir::new().unwrap();
    let hi = write_config(tmp.path(), "hi.json", &TINY.replace(r#""epochs": 2"#, r#""epochs": 1, "lambda": 2.0"#));
    let lo = write_config(tmp.path(), "lo.json", &TINY.replace(r#""epochs": 2"#, r#""epochs": 1, "lambda": 0.1"#));
    let a = train_into(&tmp, &hi, "hi");
    let b = train_into(&tmp, &lo, "lo");
    let out = tmp.path().join("report");
    let res = maskwin(&[
        "report", "--run", a.to_str().unwrap(), "--run", b.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let tradeoff = csv_rows(&out.join("tradeoff.csv"));
    assert_eq!(tradeoff.len(), 2);
    assert!(tradeoff[0].starts_with(a.to_str().unwrap()));
    let sweep = csv_rows(&out.join("penalty_sweep.csv"));
    let lambdas: Vec<f64> = sweep.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(lambdas, vec![0.1, 2.0]);
}

#[test]
fn report_without_runlog_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let res = maskwin(&["report", "--run", tmp.path().to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("runlog.csv"));
}
