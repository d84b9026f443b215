use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn precnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_precnorm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn records(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn out(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn quadratic_sgd_writes_one_row_per_step_and_descends() {
    let dir = TempDir::new().unwrap();
    let o = out(&dir, "run");
    let res = precnorm(&[
        "run", "--task", "quadratic", "--optimizer", "sgd", "--lr", "2e-5", "--steps", "100", "--out", &o,
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = records(&Path::new(&o).join("runs.csv"));
    assert_eq!(
        header.join(","),
        "run_id,optimizer,task,seed,step,train_loss,test_accuracy,scaled,wall_ms"
    );
    assert_eq!(rows.len(), 300);
    for seed in ["18", "52", "812"] {
        let losses: Vec<f64> = rows.iter().filter(|r| r[3] == seed).map(|r| r[5].parse().unwrap()).collect();
        assert_eq!(losses.len(), 100);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "seed {seed}");
    }
    assert!(rows.iter().all(|r| r[6].is_empty() && r[7] == "false"));
    let steps: Vec<u64> = rows[..100].iter().map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(steps, (1..=100).collect::<Vec<_>>());
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (out(&dir, "a"), out(&dir, "b"));
    for o in [&a, &b] {
        let res = precnorm(&["run", "--optimizer", "adam-sania,muon", "--steps", "30", "--scale-k", "3", "--out", o]);
        assert!(res.status.success());
    }
    for f in ["runs.csv", "runs.svg"] {
        let x = fs::read(Path::new(&a).join(f)).unwrap();
        assert_eq!(x, fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
    let (_, rows) = records(&Path::new(&a).join("runs.csv"));
    assert!(rows.iter().all(|r| r[7] == "true" && !r[6].is_empty()));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = out(&dir, "x");
    let bad_config = dir.path().join("bad.json");
    fs::write(&bad_config, r#"{"optimiser": "adam"}"#).unwrap();
    let empty_grid = dir.path().join("grid.json");
    fs::write(&empty_grid, r#"{"lr_grid": []}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--optimizer", "adamx", "--out", &o],
        vec!["run", "--steps", "ten", "--out", &o],
        vec!["run", "--mode", "fast", "--out", &o],
        vec!["run", "--dataset", "/nonexistent/data.svm", "--out", &o],
        vec!["run", "--config", bad_config.to_str().unwrap(), "--out", &o],
        vec!["run", "--config", "/nonexistent.json", "--out", &o],
        vec!["sweep", "--config", empty_grid.to_str().unwrap(), "--out", &o],
        vec!["selfcheck", "--suite", "nope"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let res = precnorm(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        assert!(!res.stderr.is_empty());
    }
    let res = precnorm(&["run", "--optimizer", "adamx", "--out", &o]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown optimizer"));
}

#[test]
fn flags_override_the_config_file_and_meta_echoes_it() {
    let dir = TempDir::new().unwrap();
    let o = out(&dir, "run");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"task": "quadratic", "optimizer": "adam", "steps": 5, "seed": [3, 4], "lr": 0.01}"#).unwrap();
    let res = precnorm(&["run", "--config", cfg.to_str().unwrap(), "--steps", "7", "--seed", "9", "--out", &o]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (_, rows) = records(&Path::new(&o).join("runs.csv"));
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r[1] == "adam" && r[3] == "9"));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(&o).join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["steps"], 7);
    assert_eq!(meta["config"]["lr"], 0.01);
    assert_eq!(meta["config"]["seed"], serde_json::json!([9]));
    assert!(meta["version"].as_str().unwrap().starts_with("v0.1.0"));
    assert!(meta["wall_time_ms"].is_u64());
}

#[test]
fn libsvm_dataset_is_used() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("toy.svm");
    let mut text = String::new();
    for i in 0..40 {
        let (label, x) = if i % 2 == 0 { ("+1", 2.0) } else { ("-1", -2.0) };
        text.push_str(&format!("{label} 1:{} 2:{}\n", x + 0.1 * (i % 5) as f64, 0.3 * (i % 3) as f64));
    }
    fs::write(&data, text).unwrap();
    let o = out(&dir, "run");
    let res = precnorm(&[
        "run", "--dataset", data.to_str().unwrap(), "--optimizer", "adam", "--mode", "classic", "--lr", "0.05",
        "--steps", "100", "--hidden", "8", "--out", &o,
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (_, rows) = records(&Path::new(&o).join("runs.csv"));
    let last = rows.iter().rev().find(|r| r[3] == "18").unwrap();
    assert_eq!(last[6], "1");
}

#[test]
fn selfcheck_passes_and_filters_by_suite() {
    let res = precnorm(&["selfcheck"]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(res.status.code(), Some(0), "{stdout}");
    for suite in ["lmo", "polar", "linalg", "grad", "invariance"] {
        assert!(stdout.lines().any(|l| l.starts_with("pass") && l.contains(suite)), "{suite}");
    }
    let res = precnorm(&["selfcheck", "--suite", "lmo"]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("lmo"));
}

#[test]
fn corrupted_quintic_fails_the_polar_suite() {
    for coeffs in ["3.4445,-4.7750,3.0315", "1.5,-0.5,0.0;0,0,0"] {
        let res = precnorm(&["selfcheck", "--suite", "polar", "--quintic-coefficients", coeffs]);
        assert_eq!(res.status.code(), Some(1), "{coeffs}");
        assert!(String::from_utf8_lossy(&res.stdout).starts_with("FAIL"));
    }
}

#[test]
fn invariance_verdicts() {
    let dir = TempDir::new().unwrap();
    let o = out(&dir, "inv");
    let res = precnorm(&[
        "invariance", "--optimizer", "adam-sania,adamw", "--mode", "classic", "--steps", "60", "--seed", "18", "--out", &o,
    ]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(stdout.lines().any(|l| l.starts_with("adam-sania: Invariant")), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("adamw: NotInvariant")), "{stdout}");

    let (header, rows) = records(&Path::new(&o).join("invariance.csv"));
    assert_eq!(header[..5].join(","), "optimizer,seed,verdict,max_loss_gap,max_param_gap");
    assert_eq!(rows.len(), 2);
    let (_, runs) = records(&Path::new(&o).join("runs.csv"));
    assert_eq!(runs.len(), 2 * 2 * 60);
    assert_eq!(runs.iter().filter(|r| r[7] == "true").count(), 120);
}

#[test]
fn sweep_best_matches_a_hand_scan() {
    let dir = TempDir::new().unwrap();
    let o = out(&dir, "sweep");
    let res = precnorm(&[
        "sweep", "--optimizer", "adam", "--mode", "classic", "--lr-grid", "1e-4,1e-3,1e-2,1e-1", "--steps", "40", "--out", &o,
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = records(&Path::new(&o).join("sweep.csv"));
    assert_eq!(rows.len(), 12);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (lr_c, acc_c, loss_c) = (col("lr"), col("val_accuracy"), col("val_loss"));

    let mut scan: Vec<(f64, f64, f64)> = Vec::new();
    for lr in ["0.0001", "0.001", "0.01", "0.1"] {
        let group: Vec<&Vec<String>> = rows.iter().filter(|r| r[lr_c] == lr).collect();
        assert_eq!(group.len(), 3, "{lr}");
        let mean = |c: usize| group.iter().map(|r| r[c].parse::<f64>().unwrap()).sum::<f64>() / 3.0;
        scan.push((lr.parse().unwrap(), mean(acc_c), mean(loss_c)));
    }
    let top = scan.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let expected = scan
        .iter()
        .filter(|s| s.1 == top)
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.partial_cmp(&b.0).unwrap()))
        .unwrap();

    let (bh, best) = records(&Path::new(&o).join("best.csv"));
    assert_eq!(best.len(), 1);
    let bcol = |name: &str| bh.iter().position(|h| h == name).unwrap();
    assert_eq!(best[0][bcol("lr")].parse::<f64>().unwrap(), expected.0);
    assert_eq!(best[0][bcol("mean_val_accuracy")].parse::<f64>().unwrap(), expected.1);
}
