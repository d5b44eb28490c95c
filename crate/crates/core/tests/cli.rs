use std::path::Path;
use std::process::{Command, Output};

use csi_sense::pipeline::read_dataset;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_csi-sense"));
    c.env_remove("CSI_SENSE_THREADS");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

const SMALL: &str = "[synth]\nsamples = 100\n[train]\nepochs = 2\n[augment]\nenabled = false\n";

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_one_file_per_subject_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[synth]\nsamples = 1000\n").unwrap();
    let out = run(&["synth", "--config", "c.toml", "--out", "a"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let data = tmp.path().join("a/data");
    let files: Vec<_> = read_all(&data).into_iter().filter(|(n, _)| n.ends_with(".csi")).collect();
    assert_eq!(files.len(), 5);
    for (name, _) in &files {
        let seq = read_dataset(data.join(name)).unwrap();
        assert_eq!(seq.len(), 1000);
        assert_eq!(seq.shape().len(), 30);
        assert_eq!(seq.sample_rate(), 100.0);
    }

    let again = bin()
        .args(["synth", "--config", "c.toml", "--out", "b", "--threads", "1"])
        .current_dir(tmp.path())
        .env("CSI_SENSE_THREADS", "3")
        .output()
        .unwrap();
    assert!(again.status.success());
    assert_eq!(read_all(&data), read_all(&tmp.path().join("b/data")));
}

#[test]
fn missing_config_exits_2_naming_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["e2e", "--config", "nope.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn stage_without_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out", "r"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train") && err.contains("split"), "{err}");
}

#[test]
fn bad_flag_value_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--variant", "gan"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn falling_pipeline_stage_by_stage() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    let common = ["--config", "c.toml", "--out", "r", "--task", "falling", "--variant", "hybrid", "--seed", "3"];
    for cmd in ["synth", "filter"] {
        let out = run(&[&[cmd], &common[..]].concat(), tmp.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }

    // Later stages leave earlier directories untouched.
    let root = tmp.path().join("r");
    let before = (read_all(&root.join("data")), read_all(&root.join("filtered")));
    for cmd in ["augment", "train", "eval", "report"] {
        let out = run(&[&[cmd], &common[..]].concat(), tmp.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(before, (read_all(&root.join("data")), read_all(&root.join("filtered"))));

    let metrics = csi_sense::eval::read_metrics(root.join("eval/metrics.toml")).unwrap();
    let t = &metrics.tasks[0];
    assert_eq!((t.task.as_str(), t.variant.as_str()), ("falling", "hybrid"));
    assert!(t.accuracy.is_some() && t.baseline_accuracy.is_some());
    assert_eq!(t.confusion.as_ref().unwrap().total(), 40);
    assert!(root.join("eval/confusion_falling.csv").exists());
    let model = std::fs::read_to_string(root.join("model/model.toml")).unwrap();
    assert!(model.contains("mode = \"hybrid\""));
    let summary = std::fs::read_to_string(root.join("report/summary.txt")).unwrap();
    assert!(summary.starts_with("task"));
}
