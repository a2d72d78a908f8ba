//! End-to-end runs of the command layer and the `prbm` binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use prbm::cli::{self, RunConfig};
use prbm::data::{load_bars, write_bars, BarTable};
use prbm::evaluation::{ConfusionMatrix, EvalReport};
use prbm::model::{checkpoint, Model, ModelShape};
use prbm::{Error, RngStream};

fn run(args: &[&str]) -> prbm::Result<Vec<PathBuf>> {
    let mut full = vec!["prbm"];
    full.extend_from_slice(args);
    cli::run(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Bars whose directions follow `dirs[t][i]`, moves of +-1 around 100.
fn bars_file(path: &Path, dirs: &[Vec<u8>]) {
    let n = dirs[0].len();
    let table = BarTable {
        timestamps: (0..dirs.len())
            .map(|t| format!("2020-01-01T{:02}:{:02}:00", 9 + t / 60, t % 60))
            .collect(),
        symbols: (0..n).map(|i| format!("S{i:03}")).collect(),
        open: vec![vec![100.0; n]; dirs.len()],
        close: dirs
            .iter()
            .map(|r| r.iter().map(|&d| if d == 1 { 101.0 } else { 99.0 }).collect())
            .collect(),
        dropped: 0,
    };
    write_bars(&table, fs::File::create(path).unwrap()).unwrap();
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("data");
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    run(&args).unwrap();
    out.join("data.csv")
}

#[test]
fn synth_default_writes_ingestible_deterministic_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(&dir.path().join("a"), &["--seed", "9"]);
    let b = synth(&dir.path().join("b"), &["--seed", "9"]);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    // header plus n * T = 100 * 1560 rows
    assert_eq!(bytes.iter().filter(|&&c| c == b'\n').count(), 1 + 156_000);
    let bars = load_bars(&a).unwrap();
    assert_eq!((bars.len(), bars.n()), (1560, 100));

    let data = format!("data={}", a.display());
    let out = dir.path().join("ingest");
    run(&["ingest", "--out", s(&out), "--set", &data]).unwrap();
    let summary = fs::read_to_string(out.join("ingest.txt")).unwrap();
    assert!(summary.contains("bars 1560\nstocks 100\ndropped 0\nwindows 1530\n"), "{summary}");
}

#[test]
fn train_zero_epochs_saves_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--set", "n=3", "--set", "t=40"]);
    let out = dir.path().join("run");
    let data_set = format!("data={}", data.display());
    run(&[
        "train", "--out", s(&out), "--seed", "21", "--set", &data_set, "--set", "m=4", "--set", "p=2",
        "--set", "epochs=0",
    ])
    .unwrap();
    let init = Model::init(ModelShape::new(3, 4, 2, 0.5).unwrap(), RngStream::new(21).child_seed(0));
    assert_eq!(fs::read(out.join("model.prbm")).unwrap(), checkpoint::serialize(&init));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace, "epoch,train_proxy,val_proxy,train_nll,val_nll,seconds\n");
    let echo = RunConfig::load(out.join("config.txt")).unwrap();
    assert_eq!((echo.seed, echo.m, echo.p, echo.epochs), (21, 4, 2, 0));
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn tiny_training_run_lowers_exact_nll() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(
        dir.path(),
        &["--set", "n=2", "--set", "t=1000", "--set", "coupling=3", "--set", "p_true=1"],
    );
    let out = dir.path().join("run");
    let data_set = format!("data={}", data.display());
    run(&[
        "train", "--out", s(&out), "--set", &data_set, "--set", "m=2", "--set", "p=1", "--set", "eta=0.05",
        "--set", "epochs=200",
    ])
    .unwrap();
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let nll = column(&trace, "train_nll");
    assert_eq!(nll.len(), 200);
    let model = checkpoint::load(out.join("model.prbm")).unwrap();
    let init = Model::init(*model.shape(), RngStream::new(0).child_seed(0));
    let bars = prbm::data::directions(&load_bars(&data).unwrap());
    let all: Vec<_> = prbm::data::windows(&bars, 1).unwrap().into_iter().map(|w| w.visible).collect();
    let train_set = prbm::data::split(&all, 0.8).unwrap().0;
    let before = prbm::trainer::exact_mean_nll(&init, train_set).unwrap().unwrap();
    let after = *nll.last().unwrap();
    assert!(after <= 0.9 * before, "{before} -> {after}");
}

/// Planted model, its checkpoint, and bars where unit 0 always rises and
/// unit 1 always falls.
fn planted_setup(dir: &Path) -> (String, String) {
    let ckpt = dir.join("planted.prbm");
    checkpoint::save(&common::planted_model(10.0), &ckpt).unwrap();
    let data = dir.join("bars.csv");
    bars_file(&data, &vec![vec![1, 0]; 50]);
    (format!("checkpoint={}", ckpt.display()), format!("data={}", data.display()))
}

#[test]
fn eval_perfect_predictor_and_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, data) = planted_setup(dir.path());
    let out = dir.path().join("eval");
    let base = ["eval", "--out", s(&out), "--set", &ckpt, "--set", &data, "--set", "basis=unit"];
    run(&[&base[..], &["--set", "p=1"]].concat()).unwrap();
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("loss,0.0000000000\n"), "{report}");
    assert!(report.contains("win_loss_ratio,inf\nratio_infinite,true\n"), "{report}");
    // every trade gains one unit
    assert!(report.contains("strategy_return,1.0000000000\n"), "{report}");
    let first = fs::read(out.join("report.txt")).unwrap();
    run(&[&base[..], &["--set", "p=1", "--seed", "77"]].concat()).unwrap();
    assert_eq!(fs::read(out.join("report.txt")).unwrap(), first);

    match run(&[&base[..], &["--set", "p=2"]].concat()) {
        Err(Error::Config(msg)) => assert!(msg.contains("p=1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn table_ii_report_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let counts = ConfusionMatrix {
        up_up: 5756,
        up_down: 6246,
        down_up: 5057,
        down_down: 8341,
    };
    cli::write_report(&cfg, &EvalReport::from_confusion(counts)).unwrap();
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("loss,0.4450000000\n") && csv.contains("win_loss_ratio,1.2472\n"), "{csv}");
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("Loss              0.44500"), "{text}");
}

fn predictions(out: &Path) -> Vec<(f64, u8)> {
    fs::read_to_string(out.join("predictions.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn predict_zero_weights_and_window_length() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.prbm");
    checkpoint::save(&Model::zeros(ModelShape::new(3, 2, 2, 0.5).unwrap()), &ckpt).unwrap();
    let window = dir.path().join("window.csv");
    bars_file(&window, &[vec![1, 0, 1], vec![0, 0, 1]]);
    let (ckpt, window_set) = (format!("checkpoint={}", ckpt.display()), format!("window={}", window.display()));
    let out = dir.path().join("pred");
    let base = ["predict", "--out", s(&out), "--set", &ckpt, "--set", &window_set];
    run(&[&base[..], &["--set", "p=2", "--seed", "1"]].concat()).unwrap();
    let first = fs::read(out.join("predictions.csv")).unwrap();
    assert_eq!(predictions(&out), vec![(0.5, 1); 3]);
    run(&[&base[..], &["--set", "p=2", "--seed", "2"]].concat()).unwrap();
    assert_eq!(fs::read(out.join("predictions.csv")).unwrap(), first);

    let short = dir.path().join("short.csv");
    bars_file(&short, &[vec![1, 0, 1]]);
    let short_set = format!("window={}", short.display());
    let err = run(&["predict", "--out", s(&out), "--set", &ckpt, "--set", &short_set, "--set", "p=2"]);
    assert!(matches!(err, Err(Error::Config(_))), "{err:?}");
}

#[test]
fn predict_planted_model_matches_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, _) = planted_setup(dir.path());
    let model = common::planted_model(10.0);
    for past in [vec![1u8, 0], vec![0, 1]] {
        let window = dir.path().join("w.csv");
        bars_file(&window, std::slice::from_ref(&past));
        let window_set = format!("window={}", window.display());
        let out = dir.path().join("pred");
        run(&["predict", "--out", s(&out), "--set", &ckpt, "--set", &window_set, "--set", "p=1", "--set", "k_pred=3"])
            .unwrap();
        let exact = common::exact_conditional(&model, std::slice::from_ref(&past));
        for ((q, d), (e, want)) in predictions(&out).into_iter().zip(exact.iter().zip(&past)) {
            assert!((q - e).abs() < 0.01, "{q} vs {e}");
            assert_eq!(d, *want);
        }
    }
}

#[test]
fn compare_layout_and_structured_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(
        dir.path(),
        &["--set", "n=2", "--set", "t=600", "--set", "coupling=3", "--set", "p_true=1"],
    );
    let data_set = format!("data={}", data.display());
    let out = dir.path().join("cmp");
    run(&[
        "compare", "--out", s(&out), "--set", &data_set, "--set", "m=2", "--set", "p=1", "--set", "eta=0.05",
        "--set", "epochs=30", "--set", "iterations=1",
    ])
    .unwrap();
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Model,1,Mean,Std");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["p-RBM", "VAR(1)", "RW"]);
    let mean = |row: &str| -> f64 { row.split(',').nth(2).unwrap().parse().unwrap() };
    for row in &lines[1..] {
        assert!(row.ends_with(",0.000000"), "{row}");
    }
    assert!(mean(lines[1]) < mean(lines[3]), "{csv}");
    assert!(fs::read_to_string(out.join("compare.txt")).unwrap().starts_with("Model"));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# tiny\nseed = 3\nn = 2\nt = 20\nout = ignored\n").unwrap();
    let out = dir.path().join("o");
    run(&["synth", "--config", s(&file), "--set", "n=4", "--set", "seed=5", "--seed", "6", "--out", s(&out)]).unwrap();
    let bars = load_bars(out.join("data.csv")).unwrap();
    assert_eq!((bars.len(), bars.n()), (20, 4));
    let again = dir.path().join("p");
    run(&["synth", "--seed", "6", "--out", s(&again), "--set", "n=4", "--set", "t=20"]).unwrap();
    assert_eq!(fs::read(out.join("data.csv")).unwrap(), fs::read(again.join("data.csv")).unwrap());
}

#[test]
fn binary_exit_codes_and_error_line() {
    let exe = env!("CARGO_BIN_EXE_prbm");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe)
        .args(["synth", "--out", s(dir.path()), "--set", "n=2", "--set", "t=10"])
        .output()
        .unwrap();
    assert!(ok.status.success());

    for args in [
        vec!["train", "--set", "alpha=2"],
        vec!["train", "--set", "nonsense=1"],
        vec!["eval"],
        vec!["bogus-command"],
    ] {
        let out = Command::new(exe).args(&args).current_dir(dir.path()).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{stderr}");
        assert!(stderr.starts_with("error: kind="), "{stderr}");
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "timestamp,symbol,open,close\n2020-01-01T00:00:00,A,1,x\n").unwrap();
    let out = Command::new(exe)
        .args(["ingest", "--out", s(dir.path()), "--set", &format!("data={}", bad.display())])
        .output()
        .unwrap();
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: kind=parse msg=parse error at line 2"), "{stderr}");
}
