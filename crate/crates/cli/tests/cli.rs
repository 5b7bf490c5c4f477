use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lcva(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcva"))
        .current_dir(dir)
        .env_remove("LCVA_THREADS")
        .args(args)
        .output()
        .expect("spawn lcva")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lcva(dir, args);
    assert!(
        out.status.success(),
        "lcva {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

const SMALL: &[&str] = &[
    "--causes", "4", "--symptoms", "8", "--domains", "2", "--classes", "2",
    "--per-domain", "80", "--target-size", "60",
];

fn simulate(dir: &Path, scenario: &str) {
    let mut args = vec!["simulate", "--scenario", scenario, "--seed", "3", "--out-dir", "sim"];
    args.extend_from_slice(SMALL);
    ok(dir, &args);
}

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec![
        "train", "--data", "sim/train.csv", "--k", "2", "--iters", "60", "--chains", "2",
        "--seed", "5", "--out", out,
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn train_predict_evaluate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "dep-domains");
    for f in ["train.csv", "target.csv", "truth.json", "manifest.json"] {
        assert!(dir.join("sim").join(f).exists(), "missing {f}");
    }
    train(dir, "ck.sci", &[]);
    let manifest = json(dir.join("ck.sci.manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["k"], 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(dir.join("ck.sci.trace.1.csv").exists());

    ok(dir, &[
        "predict", "--ckpt", "ck.sci", "--data", "sim/target.csv", "--variant",
        "multi-domain-cause", "--iters", "40", "--out-dir", "pred", "--full-probs",
    ]);
    let csmf = json(dir.join("pred/csmf.json"));
    let causes = csmf["causes"].as_array().unwrap();
    assert_eq!(causes.len(), 4);
    let total: f64 = causes.iter().map(|c| c["mean"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let eta = json(dir.join("pred/eta.json"));
    assert_eq!(eta["causes"].as_array().unwrap().len(), 4);
    let top = std::fs::read_to_string(dir.join("pred/top_causes.csv")).unwrap();
    assert_eq!(top.lines().count(), 61);
    let probs = std::fs::read_to_string(dir.join("pred/probabilities.csv")).unwrap();
    assert_eq!(probs.lines().next().unwrap(), "id,cause01,cause02,cause03,cause04");

    ok(dir, &["evaluate", "--pred-dir", "pred", "--truth", "sim/target.csv"]);
    let report = json(dir.join("pred/report.json"));
    let acc = report["csmf_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["n"], 60);
    let csv = std::fs::read_to_string(dir.join("pred/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(lcva(dir, &["train", "--k", "2"]).status.code(), Some(2));
    assert_eq!(
        lcva(dir, &["predict", "--ckpt", "x", "--data", "y", "--variant", "bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(lcva(dir, &["simulate", "--scenario", "nope"]).status.code(), Some(2));
    std::fs::write(dir.join("bad.toml"), "[predict]\nvariant = \"bogus\"\n").unwrap();
    let out = lcva(dir, &["--config", "bad.toml", "predict", "--ckpt", "x", "--data", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = lcva(dir, &["train", "--data", "does-not-exist.csv", "--out", "ck.sci"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn single_domain_variant_on_multi_domain_checkpoint_asks_for_pooling() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "indep-domains");
    train(dir, "ck.sci", &[]);
    let out = lcva(dir, &[
        "predict", "--ckpt", "ck.sci", "--data", "sim/target.csv", "--variant", "new-weights",
        "--iters", "10", "--out-dir", "pred",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--pool"));

    train(dir, "pooled.sci", &["--pool"]);
    ok(dir, &[
        "predict", "--ckpt", "pooled.sci", "--data", "sim/target.csv", "--variant",
        "new-weights", "--iters", "20", "--out-dir", "pred",
    ]);
    assert!(!dir.join("pred/eta.json").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_budgets() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "single-domain");
    train(dir, "a.sci", &["--threads", "1"]);
    train(dir, "b.sci", &["--threads", "4"]);
    assert_eq!(
        std::fs::read(dir.join("a.sci")).unwrap(),
        std::fs::read(dir.join("b.sci")).unwrap()
    );
    for (threads, out) in [("1", "p1"), ("3", "p3")] {
        ok(dir, &[
            "predict", "--ckpt", "a.sci", "--data", "sim/target.csv", "--variant",
            "multi-domain", "--iters", "30", "--out-dir", out, "--full-probs", "--threads", threads,
        ]);
    }
    for f in ["csmf.json", "top_causes.csv", "probabilities.csv", "eta.json"] {
        assert_eq!(
            std::fs::read(dir.join("p1").join(f)).unwrap(),
            std::fs::read(dir.join("p3").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn flags_override_config_file_over_defaults() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "cond-indep");
    std::fs::write(
        dir.join("run.toml"),
        "threads = 2\n[train]\ndata = \"sim/train.csv\"\nk = 3\niters = 40\nchains = 1\nout = \"ck.sci\"\n\
         [hyperparams]\nnu-phi = 2.5\n",
    )
    .unwrap();
    ok(dir, &["--config", "run.toml", "train", "--k", "2", "--a-omega", "3"]);
    let m = json(dir.join("ck.sci.manifest.json"));
    assert_eq!(m["config"]["k"], 2);
    assert_eq!(m["config"]["iters"], 40);
    assert_eq!(m["config"]["burn_in"], 20);
    assert_eq!(m["config"]["thin"], 1);
    assert_eq!(m["config"]["hyperparams"]["nu_phi"], 2.5);
    assert_eq!(m["config"]["hyperparams"]["a_omega"], 3.0);
    assert_eq!(m["threads"], 2);

    std::fs::write(dir.join("typo.toml"), "[train]\nitres = 4\n").unwrap();
    let out = lcva(dir, &["--config", "typo.toml", "train", "--data", "sim/train.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_scores_perfect_predictions_and_rejects_cause_mismatch() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let pred = dir.join("pred");
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::write(
        dir.join("truth.csv"),
        "id,domain,cause,s1\nt1,TARGET,a,y\nt2,TARGET,b,n\nt3,TARGET,b,y\nt4,TARGET,c,.\nx,site1,a,y\n",
    )
    .unwrap();
    let summary = |cause: &str, p: f64| {
        serde_json::json!({"cause": cause, "mean": p, "q025": p, "q50": p, "q975": p})
    };
    let csmf = serde_json::json!({
        "variant": "multi-domain", "records": 4, "draws": 1,
        "causes": [summary("a", 0.25), summary("b", 0.5), summary("c", 0.25)],
    });
    std::fs::write(pred.join("csmf.json"), csmf.to_string()).unwrap();
    std::fs::write(
        pred.join("top_causes.csv"),
        "id,cause,probability\nt1,a,0.9\nt2,b,0.8\nt3,b,0.7\nt4,c,0.6\n",
    )
    .unwrap();
    ok(dir, &["evaluate", "--pred-dir", "pred", "--truth", "truth.csv", "--out-dir", "eval"]);
    let report = json(dir.join("eval/report.json"));
    assert_eq!(report["csmf_accuracy"], 1.0);
    assert_eq!(report["top_cause_accuracy"], 1.0);
    let csv = std::fs::read_to_string(dir.join("eval/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);

    let two = serde_json::json!({
        "variant": "multi-domain", "records": 4, "draws": 1,
        "causes": [summary("a", 0.5), summary("b", 0.5)],
    });
    std::fs::write(pred.join("csmf.json"), two.to_string()).unwrap();
    let out = lcva(dir, &["evaluate", "--pred-dir", "pred", "--truth", "truth.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C=2"));
}

#[test]
fn resample_splits_a_labeled_dataset() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    simulate(dir, "indep-domains");
    ok(dir, &[
        "simulate", "--resample", "--data", "sim/train.csv", "--inclusion", "0.3", "--seed", "2",
        "--out-dir", "split",
    ]);
    let rows = |f: &str| std::fs::read_to_string(dir.join("split").join(f)).unwrap().lines().count() - 1;
    assert_eq!(rows("train.csv") + rows("target.csv"), 160);
    let target = std::fs::read_to_string(dir.join("split/target.csv")).unwrap();
    assert!(target.lines().skip(1).all(|l| l.split(',').nth(1) == Some("TARGET")));
    let m = json(dir.join("split/manifest.json"));
    assert_eq!(m["config"]["mode"], "resample");
}

#[test]
fn bench_reports_both_rates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let mut args = vec![
        "bench", "--scenario", "single-domain", "--train-iters", "10", "--predict-iters", "6",
        "--budgets", "1,2", "--out", "bench.json",
    ];
    args.extend_from_slice(SMALL);
    ok(dir, &args);
    let report = json(dir.join("bench.json"));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for run in runs {
        assert!(run["train_sweeps_per_sec"].as_f64().unwrap() > 0.0);
        assert!(run["predict_sweeps_per_sec"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(report["deterministic"], true);
    assert_eq!(report["chains"], 2);
}
