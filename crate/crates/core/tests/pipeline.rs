use driftguard::datagen::{gen_linear, gen_linear_shifted, gen_oscillator, LinearMode, OscParams, OscState};
use driftguard::monitor::first_signal;
use driftguard::nnmodel::TrainConfig;
use driftguard::{calibrate, BootstrapConfig, Calibration, Dataset, ModelSpec};

fn small() -> BootstrapConfig {
    BootstrapConfig { outer: 20, inner: 50, horizon: 300, seed: 11, ..BootstrapConfig::default() }
}

#[test]
fn linear_calibrate_save_load_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen_linear(1000, LinearMode::Single, 1);
    let path = dir.path().join("train.csv");
    train.save(&path).unwrap();
    let train = Dataset::load(&path).unwrap();

    let cal = calibrate(&train, &ModelSpec::linear(0.1), &small()).unwrap();
    let json = cal.to_json(serde_json::json!({ "test": true })).unwrap();
    let loaded = Calibration::from_json(&json).unwrap();
    assert_eq!(loaded.cl, cal.cl);

    let stream = gen_linear_shifted(300, 100, 2);
    let a = cal.monitor(&stream).unwrap();
    let b = loaded.monitor(&stream).unwrap();
    assert_eq!(a, b);
    let first = first_signal(&a).expect("the mixture shift is detected");
    assert!(first > 100, "first signal {first} precedes the shift");
}

#[test]
fn network_calibration_is_deterministic() {
    let data = gen_oscillator(&OscParams::default(), 300, 0.03, OscState::default(), 5).unwrap();
    let spec = ModelSpec::mlp(0.1, TrainConfig { epochs: 200, ..TrainConfig::default() });
    let cfg = BootstrapConfig { outer: 4, inner: 20, horizon: 50, ..small() };
    let a = calibrate(&data, &spec, &cfg).unwrap();
    let b = calibrate(&data, &spec, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.moments.dim(), 5);
    assert!(a.cl.iter().all(|c| *c > 0.0 && c.is_finite()));
}
