use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_driftguard"));
    c.env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn driftguard")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "driftguard {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'), "CRLF in {}", path.display());
    assert!(text.ends_with('\n'));
    text.lines().map(str::to_string).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cl_of(path: &Path) -> Vec<f64> {
    json(path)["cl"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }
    fn path(&self) -> &Path {
        self.dir.path()
    }
    fn join(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn linear_training(&self) -> PathBuf {
        ok(self.path(), &["simulate", "--scenario", "linear", "--n", "2000", "--seed", "7", "--out", "train.csv"]);
        self.join("train.csv")
    }
}

#[test]
fn simulate_linear_shape_and_provenance() {
    let f = Fixture::new();
    let path = f.linear_training();
    let rows = lines(&path);
    assert_eq!(rows[0], "x1,y");
    assert_eq!(rows.len(), 2001);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 2));
    let prov = json(&f.join("train.provenance.json"));
    assert_eq!(prov["command"], "simulate");
    assert_eq!(prov["config"]["seed"], 7);
    assert_eq!(prov["outputs"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_oscillator_shape() {
    let f = Fixture::new();
    ok(f.path(), &["simulate", "--scenario", "oscillator", "--n", "3000", "--out", "osc.csv"]);
    let rows = lines(&f.join("osc.csv"));
    assert_eq!(rows[0], "x1,x2,x3,x4,y");
    assert_eq!(rows.len(), 3001);
    let prov = json(&f.join("osc.provenance.json"));
    assert_eq!(prov["generator"]["state0"]["p1"], 1.0);
    assert_eq!(prov["generator"]["sigma"], 0.03);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let f = Fixture::new();
    for name in ["a.csv", "b.csv"] {
        ok(f.path(), &["simulate", "--scenario", "oscillator", "--n", "500", "--seed", "3", "--shift-at", "100", "--out", name]);
    }
    assert_eq!(std::fs::read(f.join("a.csv")).unwrap(), std::fs::read(f.join("b.csv")).unwrap());
}

#[test]
fn smoke_calibration_is_fast_and_valid() {
    let f = Fixture::new();
    f.linear_training();
    let start = Instant::now();
    ok(f.path(), &["calibrate", "--data", "train.csv", "--outer", "2", "--inner", "2", "--horizon", "5", "--out", "cal.json"]);
    assert!(start.elapsed() < Duration::from_secs(10));
    let cal = json(&f.join("cal.json"));
    assert_eq!(cal["version"], "driftguard-cal/1");
    assert_eq!(cal["cl"].as_array().unwrap().len(), 5);
    assert!(cl_of(&f.join("cal.json")).iter().all(|&c| c > 0.0));
    assert_eq!(cal["provenance"]["inputs"]["data"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn calibration_is_byte_identical_across_runs() {
    let f = Fixture::new();
    f.linear_training();
    let args = |out: &'static str| ["calibrate", "--data", "train.csv", "--outer", "10", "--inner", "20", "--horizon", "50", "--seed", "4", "--out", out];
    ok(f.path(), &args("a.json"));
    ok(f.path(), &args("b.json"));
    let (a, b) = (std::fs::read_to_string(f.join("a.json")).unwrap(), std::fs::read_to_string(f.join("b.json")).unwrap());
    // The provenance echoes the output path; everything else must match.
    assert_eq!(a.replace("a.json", "X"), b.replace("b.json", "X"));
}

#[test]
fn config_file_matches_flags() {
    let f = Fixture::new();
    f.linear_training();
    ok(f.path(), &["calibrate", "--data", "train.csv", "--outer", "4", "--inner", "10", "--horizon", "20", "--lambda", "0.05", "--out", "flags.json"]);
    std::fs::write(
        f.join("cfg.json"),
        r#"{"data": "train.csv", "outer": 4, "inner": 10, "horizon": 20, "lambda": 0.05, "out": "file.json"}"#,
    )
    .unwrap();
    ok(f.path(), &["--config", "cfg.json", "calibrate"]);
    assert_eq!(cl_of(&f.join("flags.json")), cl_of(&f.join("file.json")));

    // Flags override the file.
    ok(f.path(), &["calibrate", "--config", "cfg.json", "--horizon", "7", "--out", "over.json"]);
    assert_eq!(cl_of(&f.join("over.json")).len(), 7);
}

#[test]
fn naive_limits_dominate_corrected() {
    let f = Fixture::new();
    f.linear_training();
    let base = ["calibrate", "--data", "train.csv", "--outer", "20", "--inner", "50", "--horizon", "300", "--seed", "9"];
    ok(f.path(), &[&base[..], &["--out", "corrected.json"]].concat());
    ok(f.path(), &[&base[..], &["--naive", "--out", "naive.json"]].concat());
    let (c, n) = (cl_of(&f.join("corrected.json")), cl_of(&f.join("naive.json")));
    assert!(c.iter().zip(&n).all(|(c, n)| n >= c));
}

#[test]
fn monitor_records_match_limits() {
    let f = Fixture::new();
    f.linear_training();
    ok(f.path(), &["simulate", "--n", "1000", "--seed", "8", "--shift-at", "200", "--out", "stream.csv"]);
    ok(f.path(), &["calibrate", "--data", "train.csv", "--outer", "30", "--inner", "100", "--out", "cal.json"]);
    let stdout = ok(f.path(), &["monitor", "--calibration", "cal.json", "--stream", "stream.csv", "--out", "mon.csv"]);
    assert!(stdout.contains("first signal at i = "), "{stdout}");
    let rows = lines(&f.join("mon.csv"));
    assert_eq!(rows[0], "i,t2,cl,signal");
    assert_eq!(rows.len(), 1001);
    for (k, row) in rows[1..].iter().enumerate() {
        let v: Vec<&str> = row.split(',').collect();
        assert_eq!(v[0].parse::<usize>().unwrap(), k + 1);
        let (t2, cl): (f64, f64) = (v[1].parse().unwrap(), v[2].parse().unwrap());
        assert!(cl > 0.0);
        assert_eq!(v[3] == "1", t2 > cl);
    }
    let prov = json(&f.join("mon.provenance.json"));
    assert_eq!(prov["inputs"]["stream"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn replayed_training_data_rarely_signals() {
    let f = Fixture::new();
    f.linear_training();
    ok(f.path(), &["simulate", "--n", "1000", "--seed", "7", "--out", "replay.csv"]);
    ok(f.path(), &["calibrate", "--data", "train.csv", "--out", "cal.json"]);
    ok(f.path(), &["monitor", "--calibration", "cal.json", "--stream", "replay.csv", "--out", "mon.csv"]);
    let signals = lines(&f.join("mon.csv"))[1..].iter().filter(|r| r.ends_with(",1")).count();
    assert!(signals <= 10, "{signals} signals on in-control data");
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    f.linear_training();
    let code = |args: &[&str]| run(f.path(), args).status.code();

    assert_eq!(code(&["calibrate", "--data", "missing.csv", "--out", "x.json"]), Some(2));
    assert_eq!(code(&["calibrate", "--data", "train.csv", "--lambda", "1.5", "--out", "x.json"]), Some(2));
    assert_eq!(code(&["calibrate", "--bogus-flag"]), Some(2));
    assert_eq!(code(&["calibrate", "--data", "train.csv"]), Some(2));
    std::fs::write(f.join("bad.json"), r#"{"data": "train.csv", "no-such-key": 1}"#).unwrap();
    assert_eq!(code(&["calibrate", "--config", "bad.json", "--out", "x.json"]), Some(2));

    // Wrong artifact version and wrong stream width are input errors.
    ok(f.path(), &["calibrate", "--data", "train.csv", "--outer", "2", "--inner", "2", "--horizon", "5", "--out", "cal.json"]);
    let text = std::fs::read_to_string(f.join("cal.json")).unwrap().replace("driftguard-cal/1", "driftguard-cal/0");
    std::fs::write(f.join("old.json"), text).unwrap();
    let out = run(f.path(), &["monitor", "--calibration", "old.json", "--stream", "train.csv", "--out", "m.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("read calibration"));
    ok(f.path(), &["simulate", "--scenario", "oscillator", "--n", "50", "--out", "osc.csv"]);
    assert_eq!(code(&["monitor", "--calibration", "cal.json", "--stream", "osc.csv", "--out", "m.csv"]), Some(2));

    // A design with no spread and no penalty is a numerical failure.
    let mut flat = String::from("x1,y\n");
    for _ in 0..40 {
        flat.push_str("0,1\n");
    }
    std::fs::write(f.join("flat.csv"), flat).unwrap();
    let out = run(f.path(), &["calibrate", "--data", "flat.csv", "--gamma", "0", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibrate"));
}

#[test]
fn far_study_smoke_shapes() {
    let f = Fixture::new();
    ok(f.path(), &["far-study", "--replicates", "1", "--n-train", "300", "--outer", "5", "--inner", "20", "--out-dir", "far"]);
    let curve = lines(&f.join("far/far_curve.csv"));
    assert_eq!(curve[0], "i,bootstrap,baseline");
    assert_eq!(curve.len(), 1001);
    for row in &curve[1..] {
        for v in row.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!(v == 0.0 || v == 1.0);
        }
    }
    let times = lines(&f.join("far/detect_times.csv"));
    assert_eq!(times.len(), 2);
    let summary = json(&f.join("far/summary.json"));
    assert_eq!(summary["provenance"]["command"], "far-study");
    assert_eq!(summary["config"]["replicates"], 1);
}

#[test]
fn detect_study_with_naive_arm() {
    let f = Fixture::new();
    ok(
        f.path(),
        &["detect-study", "--replicates", "2", "--n-train", "500", "--outer", "10", "--inner", "40", "--naive", "--no-baseline", "--out-dir", "det"],
    );
    let times = lines(&f.join("det/detect_times.csv"));
    assert_eq!(times[0], "replicate,bootstrap_first_signal,bootstrap_pre_shift_signal,naive_first_signal,naive_pre_shift_signal");
    assert_eq!(times.len(), 3);
    let curve = lines(&f.join("det/far_curve.csv"));
    for row in &curve[1..] {
        for v in row.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!([0.0, 0.5, 1.0].contains(&v));
        }
    }
}

#[test]
fn compare_baseline_writes_both_limits() {
    let f = Fixture::new();
    f.linear_training();
    ok(f.path(), &["simulate", "--n", "400", "--seed", "8", "--shift-at", "200", "--out", "stream.csv"]);
    let stdout = ok(
        f.path(),
        &["compare-baseline", "--data", "train.csv", "--stream", "stream.csv", "--outer", "10", "--inner", "40", "--out", "cmp.csv"],
    );
    assert!(stdout.contains("baseline (split 0.5) constant CL"));
    let rows = lines(&f.join("cmp.csv"));
    assert_eq!(rows[0], "i,bootstrap_cl,baseline_cl,bootstrap_t2,bootstrap_signal,baseline_t2,baseline_signal");
    assert_eq!(rows.len(), 401);
    let baseline: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap()).collect();
    assert!(baseline.windows(2).all(|w| w[0] == w[1]));
    let prov = json(&f.join("cmp.provenance.json"));
    assert!(prov["baseline_warning"].is_string());
}
