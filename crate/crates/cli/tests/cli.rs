//! End-to-end checks of the `topk` binary: output values, JSON shapes, CSV
//! determinism, and the exit-code contract (0 ok, 1 domain, 2 usage).

use std::path::PathBuf;
use std::process::{Command, Output};

fn topk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("topk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn eval_prints_loss_values() {
    let out = topk(&[
        "eval", "--loss", "lk", "--n", "4", "--k", "2", "--u", "1,1,0,0", "--y", "1",
    ]);
    assert!(out.status.success());
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert_eq!(value, 0.0);

    let out = topk(&[
        "eval", "--loss", "topk", "--n", "4", "--k", "2", "--set", "1,2", "--y", "3",
    ]);
    assert!(out.status.success());
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert_eq!(value, 1.0);

    let out = topk(&[
        "eval", "--loss", "l3", "--n", "4", "--k", "2", "--u", "2,1,0,0", "--y", "3",
    ]);
    assert!(out.status.success());
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert!((value - 2.5).abs() < 1e-12);
}

#[test]
fn eval_exit_codes() {
    // Unknown flag: usage error from the parser.
    let out = topk(&["eval", "--loss", "lk", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));

    // Set report for a surrogate loss: usage error.
    let out = topk(&[
        "eval", "--loss", "l2", "--n", "4", "--k", "2", "--set", "1,2", "--y", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Dimension mismatch: domain error.
    let out = topk(&[
        "eval", "--loss", "l2", "--n", "4", "--k", "2", "--u", "1,0", "--y", "1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Label out of range: domain error.
    let out = topk(&[
        "eval", "--loss", "l2", "--n", "4", "--k", "2", "--u", "1,0,0,0", "--y", "9",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn prop_reports_optimum_and_link() {
    let out = topk(&[
        "prop",
        "--loss",
        "l4",
        "--n",
        "5",
        "--k",
        "3",
        "--p",
        ".15,.15,.15,.2,.35",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["link"], serde_json::json!([1, 2, 5]));
    let optima = json["optima"].as_array().unwrap();
    assert_eq!(optima.len(), 1);
    assert_eq!(optima[0]["report"]["members"], serde_json::json!([5]));

    let out = topk(&[
        "prop",
        "--loss",
        "lk",
        "--n",
        "4",
        "--k",
        "2",
        "--p",
        ".5,.3,.1,.1",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["link"], serde_json::json!([1, 2]));
    assert_eq!(
        json["optima"][0]["embed"],
        serde_json::json!([1.0, 1.0, 0.0, 0.0])
    );

    let out = topk(&[
        "prop", "--loss", "topk", "--n", "3", "--k", "2", "--p", ".4,.3,.3",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["optima"], serde_json::json!([[1, 2], [1, 3]]));
}

#[test]
fn prop_simplex_tolerance() {
    // Slightly off unit mass: renormalized with a warning on stderr.
    let out = topk(&[
        "prop",
        "--loss",
        "lk",
        "--n",
        "3",
        "--k",
        "2",
        "--p",
        "0.4,0.3,0.3000001",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("renormalized"));

    // Far off: rejected.
    let out = topk(&[
        "prop",
        "--loss",
        "lk",
        "--n",
        "3",
        "--k",
        "2",
        "--p",
        "0.4,0.3,0.8",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn audit_flags_inconsistent_point() {
    let out = topk(&[
        "audit",
        "--loss",
        "l4",
        "--n",
        "5",
        "--k",
        "3",
        "--p",
        ".15,.15,.15,.2,.35",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["link_consistent"], serde_json::json!(false));

    let out = topk(&[
        "audit",
        "--loss",
        "l4",
        "--n",
        "5",
        "--k",
        "2",
        "--p",
        ".5,.3,.1,.05,.05",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["link_consistent"], serde_json::json!(true));
}

#[test]
fn region_scan_emits_csv_and_summary() {
    let out = topk(&[
        "region",
        "--loss",
        "l4",
        "--predicate",
        "p4",
        "--samples",
        "400",
        "--seed",
        "7",
        "--n",
        "5",
        "--k",
        "2",
    ]);
    assert!(out.status.success());
    let body = stdout(&out);
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sample_id,p,predicate,link_consistent,link_agnostic,near_tie"
    );
    assert_eq!(body.lines().count(), 401);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("implication rate 1"), "stderr: {stderr}");
}

#[test]
fn sweep_writes_deterministic_csv() {
    let cfg = temp_path("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"n":5,"k":3,"alphas":[0.5,2.0],"samples_per_alpha":40,"seed":3,"losses":["l4","lk"]}"#,
    )
    .unwrap();
    let out_a = temp_path("sweep_a.csv");
    let out_b = temp_path("sweep_b.csv");
    for path in [&out_a, &out_b] {
        let out = topk(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    assert_eq!(
        a.lines().next().unwrap(),
        "alpha,loss,risk,regret,n_samples,seed"
    );
    // The consistent surrogate's regret column is zero on every row.
    for line in a.lines().skip(1).filter(|l| l.contains(",lk,")) {
        let regret: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(regret.abs() <= 1e-9);
    }
}

#[test]
fn region_scan_is_deterministic_per_seed() {
    let args = [
        "region",
        "--loss",
        "l2",
        "--predicate",
        "p2",
        "--samples",
        "60",
        "--seed",
        "13",
        "--n",
        "4",
        "--k",
        "2",
    ];
    let a = topk(&args);
    let b = topk(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let c = topk(&[
        "region",
        "--loss",
        "l2",
        "--predicate",
        "p2",
        "--samples",
        "60",
        "--seed",
        "14",
        "--n",
        "4",
        "--k",
        "2",
    ]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn default_sweep_emits_full_grid() {
    let out_path = temp_path("default_sweep.csv");
    let out = topk(&["sweep", "--out", out_path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let body = std::fs::read_to_string(&out_path).unwrap();
    // 7 alphas x 4 losses plus the header.
    assert_eq!(body.lines().count(), 29);
}

#[test]
fn sweep_without_out_is_usage_error() {
    let out = topk(&["sweep"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rejects_bad_config() {
    let cfg = temp_path("bad_sweep.json");
    std::fs::write(
        &cfg,
        r#"{"n":5,"k":3,"alphas":[],"samples_per_alpha":10,"seed":1,"losses":["lk"]}"#,
    )
    .unwrap();
    let out = topk(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = temp_path("unknown_field.json");
    std::fs::write(
        &cfg,
        r#"{"n":5,"k":3,"alphas":[1.0],"samples_per_alpha":10,"seed":1,"losses":["lk"],"extra":1}"#,
    )
    .unwrap();
    let out = topk(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn train_writes_per_epoch_rows() {
    let cfg = temp_path("train.json");
    std::fs::write(
        &cfg,
        r#"{"base_p":[0.15,0.15,0.15,0.2,0.35],"k":3,"alpha":16.0,"train_size":128,
            "test_size":64,"epochs":2,"learning_rate":0.01,"batch_size":64,"seed":5,
            "losses":["lk","l2"]}"#,
    )
    .unwrap();
    let out_path = temp_path("train.csv");
    let run = topk(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let body = std::fs::read_to_string(&out_path).unwrap();
    // Header plus (epochs + 1) rows per loss.
    assert_eq!(body.lines().count(), 1 + 2 * 3);
    assert_eq!(
        body.lines().next().unwrap(),
        "alpha,loss,seed,epoch,train_surrogate_loss,test_topk_loss"
    );
    let run_again = topk(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(run_again.status.success());
    assert_eq!(std::fs::read_to_string(&out_path).unwrap(), body);
}
