use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use m3d::data::{load_dataset, FileFormat};

fn m3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_m3d")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_subjects(dir: &Path) -> std::path::PathBuf {
    let out = m3d(&["synth", "--out", s(dir), "--subjects", "3", "--n-per-class", "15", "--dim", "6"]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("dataset.csv")
}

fn fast_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fast.toml");
    fs::write(&path, "iterations = 2\n").unwrap();
    path
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(m3d(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(m3d(&["run", "--source", "a.csv"]).status.code(), Some(2));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let out = m3d(&["loso", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_subjects(dir.path());
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "iterations = 2\nlamda = 0.3\n").unwrap();
    let out = m3d(&["loso", "--data", s(&data), "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lamda"), "{}", stderr(&out));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = m3d(&["synth", "--out", s(&out_dir), "--seed", seed, "--n-per-class", "10"]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("source.csv")).unwrap()
    };
    assert_eq!(read("a", "4"), read("b", "4"));
    assert_ne!(read("a", "4"), read("c", "5"));
}

#[test]
fn convert_round_trips_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_subjects(dir.path());
    let bin = dir.path().join("dataset.bin");
    let back = dir.path().join("back.csv");
    assert!(m3d(&["convert", s(&csv), s(&bin)]).status.success());
    assert!(m3d(&["convert", s(&bin), s(&back)]).status.success());
    let a = load_dataset(&csv, FileFormat::Csv).unwrap();
    let b = load_dataset(&back, FileFormat::Csv).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loso_with_two_variants_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_subjects(dir.path());
    let out = dir.path().join("out");
    let run = m3d(&[
        "loso",
        "--data",
        s(&data),
        "--config",
        s(&fast_config(dir.path())),
        "--variants",
        "full,no-manifold",
        "--jobs",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[0].starts_with("# config: {"));
    assert!(lines[1].starts_with("variant,protocol,folds"));
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("full,") && lines[3].starts_with("no-manifold,"));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().map(Vec::len), Some(2));
    assert_eq!(report[0]["config"]["iterations"], 2);

    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(preds.starts_with("# config: "));
    // 3 subjects x 45 samples, once per variant.
    assert_eq!(preds.lines().count(), 2 + 2 * 135);

    let mi_dir = dir.path().join("mi");
    let mi = m3d(&["analyze", "mi", "--data", s(&data), "--predictions", s(&out.join("predictions.csv")), "--out", s(&mi_dir)]);
    assert!(mi.status.success(), "{}", stderr(&mi));
    let mi_csv = fs::read_to_string(mi_dir.join("mi.csv")).unwrap();
    assert_eq!(mi_csv.lines().count(), 2 + 3);

    let t_dir = dir.path().join("tests");
    let tests = m3d(&["analyze", "tests", "--data", s(&data), "--out", s(&t_dir)]);
    assert!(tests.status.success(), "{}", stderr(&tests));
    let t_csv = fs::read_to_string(t_dir.join("tests.csv")).unwrap();
    assert!(t_csv.starts_with("# config: "));
    assert_eq!(t_csv.lines().count(), 2 + 3);
}

#[test]
fn jobs_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_subjects(dir.path());
    let cfg = fast_config(dir.path());
    let summary = |jobs: &str| {
        let out = dir.path().join(format!("j{jobs}"));
        let run = m3d(&["loso", "--data", s(&data), "--config", s(&cfg), "--jobs", jobs, "--out", s(&out)]);
        assert!(run.status.success(), "{}", stderr(&run));
        fs::read(out.join("summary.csv")).unwrap()
    };
    assert_eq!(summary("1"), summary("3"));
}

#[test]
fn run_writes_optional_model_and_similarity() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    assert!(m3d(&["synth", "--out", s(&pair), "--n-per-class", "20", "--dim", "6"]).status.success());
    let out = dir.path().join("run");
    let run = m3d(&[
        "run",
        "--source",
        s(&pair.join("source.csv")),
        "--target",
        s(&pair.join("target.csv")),
        "--config",
        s(&fast_config(dir.path())),
        "--save-model",
        "--similarity",
        "--out",
        s(&out),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    for f in ["report.json", "summary.csv", "predictions.csv", "model.bin", "similarity.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let table = String::from_utf8_lossy(&run.stdout);
    assert!(table.contains("accuracy") && table.contains("full"), "{table}");
}
