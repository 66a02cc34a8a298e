use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adcprog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcprog")).args(args).env("RUST_LOG", "info").output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// Small synthetic cohort with TinyNet weights; returns its run.cfg.
fn small_cohort(dir: &Path, n: usize) -> PathBuf {
    let out = dir.to_str().unwrap();
    let o = adcprog(&["--network", "tiny", "--projection-dim", "32", "--folds", "4", "--out-dir", out, "synth", "--n", &n.to_string(), "--seed", "3", "--weights-seed", "7"]);
    assert!(o.status.success(), "{}", text(&o));
    dir.join("run.cfg")
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn missing_weights_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path(), 16);
    let o = adcprog(&["-c", cfg.to_str().unwrap(), "--weights", "/definitely/not/here.adct", "embed"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("weights"), "{}", text(&o));
}

#[test]
fn bad_projection_dim_and_window_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path(), 16);
    let c = cfg.to_str().unwrap();
    let o = adcprog(&["-c", c, "--projection-dim", "300", "embed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("projection_dim"));
    let o = adcprog(&["-c", c, "explain", "--patient", "P001", "--window", "99,8,8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("window"));
    let o = adcprog(&["-c", c, "--folds", "1", "evaluate"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn second_embed_run_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path(), 16);
    let c = cfg.to_str().unwrap();
    let first = adcprog(&["-c", c, "embed"]);
    assert!(first.status.success(), "{}", text(&first));
    assert!(text(&first).contains("32 forward passes, 0 cache hits"), "{}", text(&first));
    let csv = fs::read(dir.path().join("results/embeddings.csv")).unwrap();
    let second = adcprog(&["-c", c, "embed"]);
    assert!(text(&second).contains("0 forward passes, 32 cache hits"), "{}", text(&second));
    assert!(text(&second).contains("P001_J0: embedding cache hit"));
    assert_eq!(fs::read(dir.path().join("results/embeddings.csv")).unwrap(), csv);
}

#[test]
fn evaluate_is_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path(), 24);
    let c = cfg.to_str().unwrap();
    let results = dir.path().join("results");
    let mut runs = Vec::new();
    for jobs in ["1", "8", "1", "8"] {
        let o = adcprog(&["-c", c, "--jobs", jobs, "evaluate"]);
        assert!(o.status.success(), "{}", text(&o));
        runs.push(tree(&results).into_iter().filter(|(p, _)| !p.starts_with("cache")).collect::<Vec<_>>());
    }
    assert!(runs[0].iter().any(|(p, _)| p == "comparisons.json"));
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn train_report_compare_and_explain_produce_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path(), 16);
    let c = cfg.to_str().unwrap();
    for args in [vec!["train"], vec!["evaluate"], vec!["report"], vec!["explain", "--patient", "P002", "--window", "4,16,16"], vec!["segment"], vec!["preprocess"]] {
        let mut full = vec!["-c", c];
        full.extend(args.iter());
        let o = adcprog(&full);
        assert!(o.status.success(), "{args:?}: {}", text(&o));
    }
    let r = dir.path().join("results");
    for f in ["model.adct", "model.adct.meta", "summary.csv", "fold_auc.csv", "importance.csv", "saliency.adct", "saliency_slices.csv", "lesions.csv", "preprocessed/P001_J0.adct", "masks/P001_J1.adct", "manifest-evaluate.json", "manifest-train.json"] {
        assert!(r.join(f).is_file(), "missing {f}");
    }
    let a = r.join("reports/J1+Clinical+LesionJ1.json");
    let b = r.join("reports/J0+Clinical+LesionJ0.json");
    let o = adcprog(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--alternative", "two-sided"]);
    assert!(o.status.success(), "{}", text(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["alternative"], "two_sided");
    let o = adcprog(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--alternative", "sideways"]);
    assert_eq!(o.status.code(), Some(1));
}
