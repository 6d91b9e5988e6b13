use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use l3svm::cli::bench;
use l3svm::dataio;

fn l3svm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l3svm")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, kind: &str, n: usize, seed: u64, name: &str) -> PathBuf {
        let out = self.path(name);
        let o = l3svm(&["synth", kind, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

#[test]
fn synth_rows_and_determinism() {
    let ws = Workspace::new();
    for kind in ["xor", "swissroll"] {
        let a = ws.synth(kind, 57, 3, &format!("{kind}-a"));
        let b = ws.synth(kind, 57, 3, &format!("{kind}-b"));
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text.lines().count(), 57);
        assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    }
    let o = l3svm(&["synth", "moons", "--n", "10", "--out", p(&ws.path("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = l3svm(&["synth", "xor", "--n", "0", "--out", p(&ws.path("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_predict_eval_round_trip() {
    let ws = Workspace::new();
    let train = ws.synth("xor", 300, 1, "train");
    let test = ws.synth("xor", 200, 2, "test");
    let model = ws.path("model.json");
    let o = l3svm(&["train", "--data", p(&train), "--clusters", "4", "--landmarks", "10", "--cost", "10", "--seed", "1", "--model", p(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("K=4") && s.contains("L=10") && s.contains("train_seconds="), "{s}");

    let preds = ws.path("preds");
    let o = l3svm(&["predict", "--model", p(&model), "--data", p(&test), "--out", p(&preds)]);
    assert!(o.status.success());
    let labels: Vec<i32> = std::fs::read_to_string(&preds).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(labels.len(), 200);
    assert!(labels.iter().all(|l| *l == 1 || *l == -1));

    let o = l3svm(&["eval", "--model", p(&model), "--data", p(&test)]);
    assert!(o.status.success());
    let acc: f64 = stdout(&o).trim().strip_prefix("accuracy=").unwrap().parse().unwrap();
    assert!(acc > 0.9, "accuracy {acc}");

    // identical flags give an identical model file
    let again = ws.path("again.json");
    l3svm(&["train", "--data", p(&train), "--clusters", "4", "--landmarks", "10", "--cost", "10", "--seed", "1", "--model", p(&again)]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let data = ws.synth("xor", 40, 1, "d");
    let model = ws.path("m.json");
    assert_eq!(l3svm(&[]).status.code(), Some(2));
    assert_eq!(l3svm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(l3svm(&["train", "--data", p(&data), "--clusters", "0", "--model", p(&model)]).status.code(), Some(2));
    assert_eq!(l3svm(&["train", "--data", p(&data), "--clusters", "2", "--cost", "-1", "--model", p(&model)]).status.code(), Some(2));
    let o = l3svm(&["train", "--data", p(&ws.path("missing")), "--clusters", "2", "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    // more clusters than points is a runtime failure
    assert_eq!(l3svm(&["train", "--data", p(&data), "--clusters", "41", "--model", p(&model)]).status.code(), Some(1));
    assert_eq!(l3svm(&["cv", "--data", p(&data), "--clusters", "2", "--folds", "1"]).status.code(), Some(2));

    let bad = ws.path("bad");
    std::fs::write(&bad, "1 1:0.5\n-1 0:0.3\n").unwrap();
    let o = l3svm(&["train", "--data", p(&bad), "--clusters", "1", "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    std::fs::write(&model, "{\"format_version\": 7}").unwrap();
    assert_eq!(l3svm(&["eval", "--model", p(&model), "--data", p(&data)]).status.code(), Some(1));
}

#[test]
fn cv_grid_sizes() {
    let ws = Workspace::new();
    let data = ws.synth("xor", 60, 4, "d");
    let rows = |o: &Output| stdout(o).lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).count();
    let o = l3svm(&["cv", "--data", p(&data), "--clusters", "2", "--landmarks", "4", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&o), 6);
    assert_eq!(stdout(&o), stdout(&l3svm(&["cv", "--data", p(&data), "--clusters", "2", "--landmarks", "4", "--seed", "3"])));

    let model = ws.path("best.json");
    let o = l3svm(&["cv", "--data", p(&data), "--clusters", "2", "--landmarks", "4", "--projection", "rbf", "--model", p(&model)]);
    assert!(o.status.success());
    assert_eq!(rows(&o), 36);
    assert!(model.exists());
}

#[test]
fn bound_command() {
    let ws = Workspace::new();
    let data = ws.synth("xor", 100, 5, "d");
    let model = ws.path("m.json");
    let o = l3svm(&["train", "--data", p(&data), "--clusters", "2", "--landmarks", "5", "--projection", "rbf", "--gamma", "0.5", "--cost", "2", "--model", p(&model)]);
    assert!(o.status.success());
    let json = ws.path("bound.json");
    let o = l3svm(&["bound", "--model", p(&model), "--data", p(&data), "--cost", "2", "--json", p(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let r = &doc["bounds"][0];
    assert_eq!(r["M"].as_f64(), Some(1.0));
    assert!(r["bound"].as_f64().unwrap() >= r["empirical_risk"].as_f64().unwrap());
    assert_eq!(r["delta"].as_f64(), Some(0.05));
    let table = stdout(&o);
    let cells: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(cells[4], "1.000000");

    assert_eq!(l3svm(&["bound", "--model", p(&model), "--data", p(&data), "--cost", "2", "--delta", "1.5"]).status.code(), Some(2));
    assert_eq!(l3svm(&["bound", "--model", p(&ws.path("none")), "--data", p(&data), "--cost", "2"]).status.code(), Some(1));
}

#[test]
fn bench_csv_round_trips() {
    let ws = Workspace::new();
    let train = ws.synth("xor", 120, 1, "train");
    let test = ws.synth("xor", 80, 2, "test");
    let csv = ws.path("bench.csv");
    let o = l3svm(&[
        "bench", "--data-train", p(&train), "--data-test", p(&test), "--name", "xor", "--clusters", "4", "--landmarks", "4,8",
        "--seeds", "1,2", "--cost", "10", "--out", p(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), bench::CSV_HEADER);
    let rows = bench::parse_csv(&text).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r.dataset == format!("xor{}", bench::BASELINE_SUFFIX)).count(), 2);
    assert!(rows.iter().filter(|r| r.dataset == "xor").all(|r| r.k == 4));
    assert_eq!(bench::parse_csv(&bench::write_csv(&rows).unwrap()).unwrap(), rows);
    assert!(stdout(&o).contains("±"));
}

#[test]
fn audit_command() {
    let o = l3svm(&["audit", "--m", "60", "--clusters", "2", "--landmarks", "4", "--trials", "5", "--probes", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("within_cap=true"));

    let ws = Workspace::new();
    let data = ws.synth("xor", 30, 1, "d");
    assert_eq!(l3svm(&["audit", "--data", p(&data), "--clusters", "1"]).status.code(), Some(2));
    let pool = ws.synth("xor", 30, 2, "pool");
    let o = l3svm(&["audit", "--data", p(&data), "--pool", p(&pool), "--clusters", "1", "--trials", "3", "--probes", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = dataio::read_libsvm_file(&data, None).unwrap();
    assert_eq!(d.len(), 30);
}
