use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obtree::eval::r2;
use obtree::FittedModel;
use obtree_cli::report::{BenchCommandReport, TrainCommandReport, TuneCommandReport};
use tempfile::TempDir;

fn obtree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obtree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = obtree(args);
    assert!(
        out.status.success(),
        "obtree {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes a 120-row CSV with header `a,b,c,y` and returns its path.
fn write_data(dir: &Path) -> PathBuf {
    let mut s = String::from("a,b,c,y\n");
    for i in 0..120 {
        let a = ((i * 37) % 101) as f64 / 101.0;
        let b = ((i * 53) % 97) as f64 / 97.0;
        let c = ((i * 11) % 13) as f64;
        let y = if a + b > 1.0 { 10.0 + c } else { 2.0 * c } + a;
        s.push_str(&format!("{a},{b},{c},{y}\n"));
    }
    let path = dir.join("data.csv");
    fs::write(&path, s).unwrap();
    path
}

struct Files {
    _dir: TempDir,
    data: PathBuf,
    model: PathBuf,
    report: PathBuf,
}

fn files() -> Files {
    let dir = TempDir::new().unwrap();
    let data = write_data(dir.path());
    Files {
        model: dir.path().join("model.json"),
        report: dir.path().join("report.json"),
        data,
        _dir: dir,
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn quick_train(f: &Files, extra: &[&str]) {
    let mut args = vec![
        "train", "--data", s(&f.data), "--target", "y", "--header", "--depth", "2", "--starts", "2", "--epochs",
        "30", "--seed", "7", "--out", s(&f.model), "--report", s(&f.report), "-q",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn train_report(f: &Files) -> TrainCommandReport {
    serde_json::from_str(&fs::read_to_string(&f.report).unwrap()).unwrap()
}

#[test]
fn train_writes_a_valid_model_and_report() {
    let f = files();
    quick_train(&f, &["--leaf", "constant"]);
    let model = FittedModel::load(&f.model).unwrap();
    assert_eq!(model.model.kind_name(), "oblique_tree");
    let report = train_report(&f);
    assert_eq!(report.config.depth, 2);
    assert_eq!(report.flags.input.seed, 7);
    assert_eq!(report.scores.n_train, 120);
    // Constant leaves are polished unless told otherwise.
    assert!(report.polish.is_some());
}

#[test]
fn polish_flags_toggle_the_pass() {
    let f = files();
    quick_train(&f, &["--leaf", "linear", "--polish"]);
    assert!(train_report(&f).polish.is_some());
    quick_train(&f, &["--leaf", "linear"]);
    assert!(train_report(&f).polish.is_none());
    quick_train(&f, &["--no-polish"]);
    assert!(train_report(&f).polish.is_none());
}

#[test]
fn lambda_is_echoed_into_the_report() {
    let f = files();
    quick_train(&f, &["--leaf", "linear", "--lambda", "1e-5"]);
    let report = train_report(&f);
    assert_eq!(report.config.lambda, 1e-5);
    assert_eq!(report.train.config.lambda, 1e-5);
    assert_eq!(report.config.leaf_mode, obtree::LeafMode::Linear);
}

#[test]
fn report_round_trips() {
    let f = files();
    quick_train(&f, &["--split", "75/25"]);
    let text = fs::read_to_string(&f.report).unwrap();
    let report: TrainCommandReport = serde_json::from_str(&text).unwrap();
    let again: TrainCommandReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(
        serde_json::to_value(&report).unwrap(),
        serde_json::to_value(&again).unwrap()
    );
    assert_eq!(report.scores.n_test, 30);
    assert!(report.scores.test_r2.is_some());
}

#[test]
fn predictions_match_library_r2() {
    let f = files();
    quick_train(&f, &[]);
    let out = ok(&["predict", "--model", s(&f.model), "--data", s(&f.data), "--header", "--target", "y"]);
    let pred: Vec<f64> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(pred.len(), 120);

    let raw = obtree::dataset::load_csv(&f.data, &"y".parse().unwrap(), true).unwrap();
    let model = FittedModel::load(&f.model).unwrap();
    let lib = model.predict_raw(&raw.features).unwrap();
    assert_eq!(pred, lib.to_vec());
    let external = {
        let y = raw.targets.as_slice().unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - sse / y.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
    };
    let lib_r2 = r2(raw.targets.as_slice().unwrap(), &pred).unwrap().r2;
    assert!((external - lib_r2).abs() < 1e-12);
}

#[test]
fn predict_handles_empty_and_mismatched_input() {
    let f = files();
    quick_train(&f, &[]);
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = ok(&["predict", "--model", s(&f.model), "--data", s(&empty)]);
    assert!(out.stdout.is_empty());

    let wide = dir.path().join("wide.csv");
    fs::write(&wide, "1,2,3,4,5\n").unwrap();
    let out = obtree(&["predict", "--model", s(&f.model), "--data", s(&wide)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn user_errors_exit_with_one() {
    let f = files();
    let out = obtree(&["train", "--data", s(&f.data), "--target", "y", "--header", "--unknown", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = obtree(&["train", "--data", "/no/such/file.csv", "--target", "y", "--out", s(&f.model)]);
    assert_eq!(out.status.code(), Some(1));
    let out = obtree(&["train", "--data", s(&f.data), "--target", "missing", "--header", "--out", s(&f.model)]);
    assert_eq!(out.status.code(), Some(1));
    let out = obtree(&["train", "--data", s(&f.data), "--target", "y", "--header", "--depth", "0", "--out", s(&f.model)]);
    assert_eq!(out.status.code(), Some(1));
    // `train` needs `--out`.
    let out = obtree(&["train", "--data", s(&f.data), "--target", "y"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tune_reports_each_depth() {
    let f = files();
    ok(&[
        "tune", "--data", s(&f.data), "--target", "y", "--header", "--model", "cart", "--depths", "1:4", "--report",
        s(&f.report), "-q",
    ]);
    let report: TuneCommandReport = serde_json::from_str(&fs::read_to_string(&f.report).unwrap()).unwrap();
    let depths: Vec<usize> = report.scores.iter().map(|d| d.depth).collect();
    assert_eq!(depths, vec![1, 2, 3, 4]);
    assert!(report.scores.iter().all(|d| d.validation_r2.is_some()));
    assert!((1..=4).contains(&report.best_depth));
}

#[test]
fn bench_reports_models_and_ranks() {
    let f = files();
    let out = ok(&[
        "bench", "--data", s(&f.data), "--target", "y", "--header", "--models", "cart,rf", "--depths", "1:3",
        "--rf-depths", "2:3", "--rf-trees", "5,10", "--timing-reps", "1", "--report", s(&f.report), "-q",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("cart") && table.contains("rf") && table.contains("Friedman Rank"));
    let report: BenchCommandReport = serde_json::from_str(&fs::read_to_string(&f.report).unwrap()).unwrap();
    assert_eq!(report.report.datasets[0].results.len(), 2);
    assert_eq!(report.report.friedman_ranks.as_ref().unwrap().len(), 2);
    assert_eq!(report.flags.models, "cart,rf");
}

#[test]
fn bench_rf_tree_grid_default() {
    let args = <obtree_cli::args::Cli as clap::Parser>::try_parse_from(["obtree", "bench", "--data", "d.csv", "--target", "y"])
        .unwrap();
    let obtree_cli::args::Command::Bench(b) = args.command else {
        panic!("expected bench")
    };
    assert_eq!(
        obtree_cli::commands::parse_grid("rf-trees", &b.rf_trees).unwrap(),
        vec![50, 100, 200, 300, 400, 500]
    );
}

#[test]
fn single_thread_runs_are_bit_identical() {
    let f = files();
    let dir = TempDir::new().unwrap();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let model = dir.path().join(format!("m{i}.json"));
        ok(&[
            "train", "--data", s(&f.data), "--target", "y", "--header", "--depth", "2", "--starts", "2", "--epochs",
            "40", "--seed", "3", "--threads", "1", "--out", s(&model), "-q",
        ]);
        bytes.push(fs::read(&model).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}
