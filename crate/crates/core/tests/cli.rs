use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_voidfield");

fn voidfield(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("VOIDFIELD_OUTPUT_ROOT").output().expect("spawn voidfield")
}

fn ok(out: &Output) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate(dir: &Path, seed: &str) {
    ok(&voidfield(&[
        "generate",
        "--case",
        "non-rotated",
        "--n",
        "40",
        "--grid",
        "32",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]));
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_idempotent() {
    let tmp = tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, "5");
    generate(&b, "5");
    let (fa, fb) = (dir_files(&a), dir_files(&b));
    let data_files = |f: &[(String, Vec<u8>)]| f.iter().filter(|(n, _)| n != "run.json").cloned().collect::<Vec<_>>();
    assert_eq!(data_files(&fa), data_files(&fb));
    assert!(fa.iter().any(|(n, _)| n == "manifest.json"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("out");
    let code = |args: &[&str]| voidfield(args).status.code();
    assert_eq!(code(&["generate", "--n", "0", "--out", out.to_str().unwrap()]), Some(2));
    assert_eq!(code(&["fit", "--framework", "f3", "--data", "x"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    let missing = tmp.path().join("missing");
    assert_eq!(code(&["fit", "--data", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]), Some(2));
    assert!(!out.join("bundle").exists());
}

#[test]
fn corrupt_dataset_exits_3() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "1");
    let stress = data.join("stress.f64");
    let bytes = fs::read(&stress).unwrap();
    fs::write(&stress, &bytes[..bytes.len() / 2]).unwrap();
    let out = tmp.path().join("fit");
    let o = voidfield(&["fit", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn fit_evaluate_study_pipeline() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "2");
    let d = data.to_str().unwrap();

    let fit = tmp.path().join("fit");
    ok(&voidfield(&[
        "fit",
        "--data",
        d,
        "--framework",
        "f2-nn",
        "--trainval",
        "20",
        "--test",
        "10",
        "--trials",
        "1",
        "--max-epochs",
        "30",
        "--seed",
        "3",
        "--out",
        fit.to_str().unwrap(),
    ]));
    for f in ["bundle", "trials.csv", "summary.json", "run.json"] {
        assert!(fit.join(f).exists(), "missing {f}");
    }
    let trials = fs::read_to_string(fit.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 2, "{trials}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fit.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["winner"]["id"], 0, "{summary}");

    let eval = tmp.path().join("eval");
    ok(&voidfield(&[
        "evaluate",
        "--bundle",
        fit.join("bundle").to_str().unwrap(),
        "--data",
        d,
        "--out",
        eval.to_str().unwrap(),
    ]));
    let metrics = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "sample_stat,average,maximum,p50,p90,p97,p99");
    assert!(eval.join("run.json").exists());

    let study = tmp.path().join("study");
    ok(&voidfield(&[
        "study",
        "--data",
        d,
        "--framework",
        "f1-gp",
        "--sizes",
        "20",
        "--test",
        "10",
        "--seed",
        "3",
        "--out",
        study.to_str().unwrap(),
    ]));
    let rows = fs::read_to_string(study.join("study_f1-gp.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2, "{rows}");
    assert!(study.join("run.json").exists());
}

#[test]
fn output_root_env_prefixes_relative_out() {
    let tmp = tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["generate", "--n", "5", "--grid", "8", "--out", "rel"])
        .env("VOIDFIELD_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    ok(&o);
    assert!(tmp.path().join("rel").join("manifest.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 7, "grid": 8, "seed": 1}"#).unwrap();
    let out = tmp.path().join("g");
    ok(&voidfield(&["generate", "--config", cfg.to_str().unwrap(), "--n", "4", "--out", out.to_str().unwrap()]));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    let text = run.to_string();
    assert!(text.contains("\"n\":4"), "{text}");
    assert!(text.contains("\"grid\":8"), "{text}");
}
