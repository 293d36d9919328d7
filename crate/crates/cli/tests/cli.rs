use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csocnn"));
    c.env_remove("CSOCNN_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic training run; returns its output directory.
fn train(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&["train", "--synthetic", "--samples", "600", "--epochs", "2", "--seed", seed, "--out", s(&out)]);
    out
}

#[test]
fn train_smoke_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "run", "7");
    let m = json(&out.join("train-manifest.json"));
    assert_eq!(m["status"], "complete");
    assert_eq!(m["seeds"]["global"], 7);
    let listed: Vec<String> = m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap().to_string()).collect();
    for f in [
        "model.csocnn",
        "scaler.json",
        "history.csv",
        "accuracy.svg",
        "loss.svg",
        "roc.csv",
        "roc.svg",
        "confusion.csv",
        "confusion.svg",
        "probabilities.csv",
        "report.txt",
        "metrics.json",
        "test_split.csv",
        "val_split.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
        assert!(listed.iter().any(|l| l == f), "{f} not in manifest");
    }
    for a in m["artifacts"].as_array().unwrap() {
        let p = out.join(a["path"].as_str().unwrap());
        assert_eq!(fs::metadata(&p).unwrap().len(), a["bytes"].as_u64().unwrap());
    }
    assert!(listed.iter().any(|l| l.starts_with("checkpoints/")));
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    let out = run(&["train", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn equal_seeds_give_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a", "11");
    let b = train(dir.path(), "b", "11");
    for f in ["history.csv", "roc.csv", "confusion.csv", "probabilities.csv", "test_split.csv", "metrics.json", "report.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma = json(&a.join("train-manifest.json"));
    let mb = json(&b.join("train-manifest.json"));
    assert_eq!(ma["metrics"], mb["metrics"]);
}

#[test]
fn evaluate_reports_every_table_field_and_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", "3");
    let model = run_dir.join("model.csocnn");
    let eval_dir = dir.path().join("eval");
    ok(&["evaluate", "--model", s(&model), "--synthetic", "--samples", "600", "--seed", "3", "--out", s(&eval_dir)]);
    let m = json(&eval_dir.join("metrics.json"));
    for name in [
        "Training accuracy",
        "Validating accuracy",
        "Testing accuracy",
        "Precision Score",
        "Recall Score",
        "F1 Score",
        "Sensitivity",
        "Specificity",
        "PPV",
        "NPV",
        "Kappa Score",
    ] {
        assert!(m["table"].get(name).is_some(), "{name}");
    }
    // same split, same model, same numbers
    assert_eq!(json(&run_dir.join("metrics.json"))["table"], m["table"]);

    let roc = fs::read_to_string(eval_dir.join("roc.csv")).unwrap();
    let mut rows: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for line in roc.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        rows.entry(f[0].to_string()).or_default().push((f[1].parse().unwrap(), f[2].parse().unwrap()));
    }
    assert!(rows.contains_key("micro"));
    for (curve, pts) in &rows {
        assert_eq!(pts.first(), Some(&(0.0, 0.0)), "{curve}");
        assert_eq!(pts.last(), Some(&(1.0, 1.0)), "{curve}");
    }
    for svg in ["roc.svg", "confusion.svg"] {
        let text = fs::read_to_string(eval_dir.join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }

    let truncated = dir.path().join("truncated.csocnn");
    let bytes = fs::read(&model).unwrap();
    fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    let scaler = run_dir.join("scaler.json");
    let out = run(&["evaluate", "--model", s(&truncated), "--scaler", s(&scaler), "--synthetic", "--samples", "600", "--seed", "3", "--out", s(&eval_dir)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let other = train(dir.path(), "other", "4");
    let out = run(&["evaluate", "--model", s(&model), "--scaler", s(&other.join("scaler.json")), "--synthetic", "--samples", "600", "--seed", "3", "--out", s(&eval_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "scaler_mismatch");
}

#[test]
fn history_and_report_svgs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "run", "5");
    for svg in ["accuracy.svg", "loss.svg", "roc.svg", "confusion.svg"] {
        let text = fs::read_to_string(out.join(svg)).unwrap();
        roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{svg}: {e}"));
    }
}

fn detect(model: &Path, args: &[&str], stdin: Option<&str>) -> String {
    let mut c = bin();
    c.args(["detect", "--model", s(model)]).args(args);
    c.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = c.spawn().unwrap();
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes()).unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn detect_streams_verdicts_consistent_with_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = train(dir.path(), "run", "9");
    let model = run_dir.join("model.csocnn");
    let manifest_dir = dir.path().join("detect");
    let md = s(&manifest_dir);

    // three records through stdin, in order
    let split = fs::read_to_string(run_dir.join("test_split.csv")).unwrap();
    let three: Vec<&str> = split.lines().take(4).collect();
    let text = detect(&model, &["--out", md], Some(&(three.join("\n") + "\n")));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, l) in lines[1..].iter().enumerate() {
        assert!(l.starts_with(&format!("{i},")), "{l}");
    }

    // offline recount from the evaluation probabilities of the same records
    let probs = fs::read_to_string(run_dir.join("probabilities.csv")).unwrap();
    let benign_col = probs.lines().next().unwrap().split(',').position(|h| h == "p_Benign").unwrap();
    let scores: Vec<f64> = probs
        .lines()
        .skip(1)
        .map(|l| (1.0 - l.split(',').nth(benign_col).unwrap().parse::<f64>().unwrap()).clamp(0.0, 1.0))
        .collect();
    let test_csv = run_dir.join("test_split.csv");
    for t in ["0", "0.5", "0.8"] {
        let text = detect(&model, &["--data", s(&test_csv), "--threshold", t, "--out", md], None);
        let verdicts: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
        assert_eq!(verdicts.len(), scores.len());
        let flagged = verdicts.iter().filter(|&&v| v == "anomalous").count();
        let tv: f64 = t.parse().unwrap();
        assert_eq!(flagged, scores.iter().filter(|&&sc| sc > tv).count(), "threshold {t}");
        if t == "0" {
            let nonzero = scores.iter().filter(|&&sc| sc > 0.0).count();
            assert_eq!(flagged, nonzero);
        }
        let m = json(&manifest_dir.join("detect-manifest.json"));
        assert_eq!(m["metrics"]["anomalous"], flagged);
    }
}

#[test]
fn optimize_history_has_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt");
    let common = ["optimize", "--synthetic", "--samples", "400", "--seed", "2", "--batch-range", "32,256", "--epoch-range", "1,2"];
    let mut args = common.to_vec();
    args.extend(["--cats", "2", "--iters", "2", "--out", s(&out)]);
    ok(&args);
    let rows = fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 2);
    let m = json(&out.join("optimize-manifest.json"));
    let best = m["metrics"]["best_fitness"].as_array().unwrap().clone();
    let first = m["metrics"]["first_iteration_best_fitness"].as_array().unwrap().clone();
    let (b, f) = ((best[0].as_f64().unwrap(), best[1].as_f64().unwrap()), (first[0].as_f64().unwrap(), first[1].as_f64().unwrap()));
    assert!(b.0 > f.0 || (b.0 == f.0 && b.1 <= f.1), "{b:?} vs {f:?}");
    roxmltree::Document::parse(&fs::read_to_string(out.join("convergence.svg")).unwrap()).unwrap();

    let single = dir.path().join("single");
    let mut args = common.to_vec();
    args.extend(["--cats", "1", "--iters", "1", "--out", s(&single)]);
    ok(&args);
    let m = json(&single.join("optimize-manifest.json"));
    assert_eq!(m["metrics"]["evaluations"], 1);
    assert_eq!(fs::read_to_string(single.join("convergence.csv")).unwrap().lines().count(), 2);
    for f in ["model.csocnn", "best_hyperparams.json", "metrics.json", "roc.csv"] {
        assert!(single.join(f).is_file(), "{f}");
    }
}
