use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use driftguard::data::format_f64;
use driftguard::datagen::{
    gen_linear, gen_linear_shifted, gen_oscillator, gen_oscillator_random_times, gen_oscillator_stream, LinearMode, OscParams,
    OscSampling, OscState, OSC_HORIZON,
};
use driftguard::monitor::{first_signal, write_records_csv};
use driftguard::study::{detect_study, far_study, Scenario, StudyConfig};
use driftguard::{baseline_split_cl, calibrate, BootstrapConfig, Calibration, Dataset, DriftError, ModelKind, ModelSpec};

use crate::args::*;

/// Spacing of the default 3000-point oscillator training grid, used for
/// sequential streams.
const OSC_TRAIN_DT: f64 = OSC_HORIZON / 2999.0;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Step { step: &'static str, source: DriftError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Step { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => f.write_str(msg),
            CliError::Step { step, source } => write!(f, "{step}: {source}"),
        }
    }
}

trait StepExt<T> {
    fn step(self, step: &'static str) -> Result<T, CliError>;
}

impl<T> StepExt<T> for driftguard::Result<T> {
    fn step(self, step: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Step { step, source })
    }
}

impl<T> StepExt<T> for std::io::Result<T> {
    fn step(self, step: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Step { step, source: e.into() })
    }
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Input(format!("missing required --{flag}")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let config = cli.config.as_deref();
    let merge = |e: String| CliError::Input(e);
    match &cli.command {
        Command::Simulate(a) => simulate(&merge_config(name, a, config).map_err(merge)?),
        Command::Calibrate(a) => cmd_calibrate(&merge_config(name, a, config).map_err(merge)?),
        Command::Monitor(a) => monitor(&merge_config(name, a, config).map_err(merge)?),
        Command::FarStudy(a) => study(name, &merge_config(name, a, config).map_err(merge)?, false),
        Command::DetectStudy(a) => study(name, &merge_config(name, a, config).map_err(merge)?, true),
        Command::CompareBaseline(a) => compare(&merge_config(name, a, config).map_err(merge)?),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_record(path: &Path) -> Result<Value, CliError> {
    let bytes = std::fs::read(path).step("hash file")?;
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }))
}

fn provenance(command: &str, config: &impl serde::Serialize, inputs: Value) -> Value {
    json!({
        "tool": concat!("driftguard ", env!("CARGO_PKG_VERSION")),
        "command": command,
        "config": serde_json::to_value(config).unwrap_or(Value::Null),
        "inputs": inputs,
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("provenance.json")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).step("create output directory")?;
    }
    std::fs::write(path, bytes).step("write output")
}

/// Write `bytes` to `out` and a provenance sidecar that records their hash.
fn write_with_sidecar(out: &Path, bytes: &[u8], mut prov: Value) -> Result<(), CliError> {
    write_file(out, bytes)?;
    prov["outputs"] = json!({ "path": out.display().to_string(), "sha256": sha256_hex(bytes) });
    let text = serde_json::to_string_pretty(&prov).map_err(|e| CliError::Input(e.to_string()))? + "\n";
    write_file(&sidecar_path(out), text.as_bytes())
}

fn apply_model(spec: &mut ModelSpec, m: &ModelArgs) {
    if let Some(k) = m.model {
        spec.kind = k.into();
    }
    if let Some(g) = m.gamma {
        spec.gamma = g;
    }
    let t = &mut spec.train;
    t.epochs = m.epochs.unwrap_or(t.epochs);
    t.step_size = m.step_size.unwrap_or(t.step_size);
    t.momentum = m.momentum.unwrap_or(t.momentum);
    t.seed = m.train_seed.unwrap_or(t.seed);
    t.grad_tol = m.grad_tol.unwrap_or(t.grad_tol);
}

fn apply_bootstrap(cfg: &mut BootstrapConfig, b: &BootstrapArgs) {
    cfg.outer = b.outer.unwrap_or(cfg.outer);
    cfg.inner = b.inner.unwrap_or(cfg.inner);
    cfg.lambda = b.lambda.unwrap_or(cfg.lambda);
    cfg.alpha = b.alpha.unwrap_or(cfg.alpha);
    cfg.horizon = b.horizon.unwrap_or(cfg.horizon);
    cfg.epsilon = b.epsilon.or(cfg.epsilon);
    cfg.seed = b.seed.unwrap_or(cfg.seed);
    cfg.naive |= b.naive;
}

fn state0(o: &OscArgs) -> Result<OscState, CliError> {
    match o.state0.as_deref() {
        None => Ok(OscState::default()),
        Some(&[p1, v1, p2, v2]) => Ok(OscState { p1, v1, p2, v2, t: 0.0 }),
        Some(v) => Err(CliError::Input(format!("--state0 needs 4 values, got {}", v.len()))),
    }
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).step("read data")
}

// ---------------------------------------------------------------------------
// Commands

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let out = required(&a.out, "out")?;
    let scenario = a.scenario.unwrap_or(ScenarioArg::Linear);
    let seed = a.seed.unwrap_or(0);
    let (data, generator) = match scenario {
        ScenarioArg::Linear => {
            if a.shifted || a.osc.sigma.is_some() || a.osc.state0.is_some() || a.osc.sampling.is_some() {
                return Err(CliError::Input("--shifted, --sigma, --state0 and --sampling apply to the oscillator only".into()));
            }
            let n = a.n.unwrap_or(2000);
            let data = match (a.shift_at, a.mode) {
                (Some(k), None | Some(ModeArg::Single)) => gen_linear_shifted(n, k, seed),
                (Some(_), Some(ModeArg::Mixture)) => {
                    return Err(CliError::Input("--shift-at already switches the stream to the mixture".into()));
                }
                (None, mode) => gen_linear(n, mode.map_or(LinearMode::Single, Into::into), seed),
            };
            (data, json!({ "scenario": "linear", "n": n, "seed": seed, "mode": a.mode, "shift_at": a.shift_at }))
        }
        ScenarioArg::Oscillator => {
            if a.mode.is_some() {
                return Err(CliError::Input("--mode applies to the linear scenario only".into()));
            }
            let n = a.n.unwrap_or(3000);
            let sigma = a.osc.sigma.unwrap_or(0.03);
            let s0 = state0(&a.osc)?;
            let base = OscParams::default();
            let params = if a.shifted { base.shifted() } else { base };
            let sampling: OscSampling = a.osc.sampling.map_or(OscSampling::default(), Into::into);
            let data = match a.shift_at {
                None => gen_oscillator(&params, n, sigma, s0, seed),
                Some(k) => match sampling {
                    OscSampling::RandomTimes => gen_oscillator_random_times(&params, &params.shifted(), n, k, sigma, s0, seed),
                    OscSampling::Sequential => {
                        gen_oscillator_stream(&params, &params.shifted(), n, k, OSC_TRAIN_DT, sigma, s0, seed)
                    }
                },
            }
            .step("generate data")?;
            let generator = json!({
                "scenario": "oscillator",
                "n": n,
                "seed": seed,
                "sigma": sigma,
                "params": params,
                "state0": s0,
                "shift_at": a.shift_at,
                "sampling": a.shift_at.map(|_| sampling),
            });
            (data, generator)
        }
    };
    let mut buf = Vec::new();
    data.write_csv(&mut buf).step("write data")?;
    let mut prov = provenance("simulate", a, Value::Null);
    prov["generator"] = generator;
    write_with_sidecar(&out, &buf, prov)?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let data_path = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    let data = load_data(&data_path)?;
    let mut spec = ModelSpec::linear(0.1);
    apply_model(&mut spec, &a.model);
    let mut cfg = BootstrapConfig::default();
    apply_bootstrap(&mut cfg, &a.bootstrap);

    let cal = calibrate(&data, &spec, &cfg).step("calibrate")?;
    let prov = provenance("calibrate", a, json!({ "data": file_record(&data_path)? }));
    let text = cal.to_json(prov).step("serialize calibration")? + "\n";
    write_file(&out, text.as_bytes())?;
    println!(
        "calibrated {} model on {} rows: CL_1 = {}, CL_{} = {} -> {}",
        cal.spec.kind,
        cal.n_train,
        format_f64(cal.cl[0]),
        cal.cl.len(),
        format_f64(*cal.cl.last().unwrap_or(&f64::NAN)),
        out.display()
    );
    Ok(())
}

fn monitor(a: &MonitorArgs) -> Result<(), CliError> {
    let cal_path = required(&a.calibration, "calibration")?;
    let stream_path = required(&a.stream, "stream")?;
    let out = required(&a.out, "out")?;
    let cal = Calibration::load(&cal_path).step("read calibration")?;
    let stream = Dataset::load(&stream_path).step("read stream")?;
    let records = cal.monitor(&stream).step("monitor")?;

    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf).step("write records")?;
    let prov = provenance(
        "monitor",
        a,
        json!({ "calibration": file_record(&cal_path)?, "stream": file_record(&stream_path)? }),
    );
    write_with_sidecar(&out, &buf, prov)?;

    let signals = records.iter().filter(|r| r.signal).count();
    match first_signal(&records) {
        Some(i) => println!("first signal at i = {i} ({signals} of {} observations signal)", records.len()),
        None => println!("no signal in {} observations", records.len()),
    }
    Ok(())
}

fn study_config(a: &StudyArgs) -> Result<StudyConfig, CliError> {
    let scenario = a.scenario.unwrap_or(ScenarioArg::Linear);
    let mut cfg = match scenario {
        ScenarioArg::Linear => {
            if a.osc.sigma.is_some() || a.osc.state0.is_some() || a.osc.sampling.is_some() {
                return Err(CliError::Input("--sigma, --state0 and --sampling apply to the oscillator only".into()));
            }
            StudyConfig::linear()
        }
        ScenarioArg::Oscillator => {
            let mut cfg = StudyConfig::oscillator(a.osc.sigma.unwrap_or(0.03));
            if let Scenario::Oscillator { state0: s0, sampling, .. } = &mut cfg.scenario {
                *s0 = state0(&a.osc)?;
                if let Some(s) = a.osc.sampling {
                    *sampling = s.into();
                }
            }
            cfg
        }
    };
    cfg.replicates = a.replicates.unwrap_or(cfg.replicates);
    cfg.n_train = a.n_train.unwrap_or(cfg.n_train);
    cfg.stream_len = a.stream_len.unwrap_or(cfg.stream_len);
    cfg.shift_at = a.shift_at.unwrap_or(cfg.shift_at);
    apply_model(&mut cfg.model, &a.model);
    // In a study, --naive adds an uncorrected arm next to the corrected one.
    let naive_arm = a.bootstrap.naive;
    apply_bootstrap(&mut cfg.bootstrap, &BootstrapArgs { naive: false, ..a.bootstrap.clone() });
    cfg.seed = a.bootstrap.seed.unwrap_or(cfg.seed);
    cfg.split_fraction = a.split_fraction.unwrap_or(cfg.split_fraction);
    cfg.baseline = !a.no_baseline;
    cfg.control = !a.no_control;
    cfg.naive = naive_arm;
    cfg.cv_folds = a.cv_folds.unwrap_or(cfg.cv_folds);
    if cfg.model.kind != ModelKind::Mlp {
        cfg.cv_folds = 0;
    }
    Ok(cfg)
}

fn study(name: &'static str, a: &StudyArgs, detect: bool) -> Result<(), CliError> {
    let out_dir = required(&a.out_dir, "out-dir")?;
    let cfg = study_config(a)?;
    let result = if detect { detect_study(&cfg) } else { far_study(&cfg) }.step("study")?;
    result.write_outputs(&out_dir, provenance(name, a, Value::Null)).step("write study outputs")?;
    let summary = serde_json::to_string_pretty(&result.summary()).map_err(|e| CliError::Input(e.to_string()))?;
    println!("{summary}");
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let data_path = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    let data = load_data(&data_path)?;
    let mut spec = ModelSpec::linear(0.1);
    apply_model(&mut spec, &a.model);
    let mut cfg = BootstrapConfig::default();
    apply_bootstrap(&mut cfg, &a.bootstrap);
    let split = a.split_fraction.unwrap_or(0.5);

    let cal = calibrate(&data, &spec, &cfg).step("calibrate")?;
    let base = baseline_split_cl(&data, split, &spec, cfg.lambda, cfg.alpha, cfg.epsilon).step("baseline limit")?;
    let stream = a.stream.as_deref().map(Dataset::load).transpose().step("read stream")?;
    let monitored = match &stream {
        Some(s) => Some((cal.monitor(s).step("monitor")?, base.monitor(s).step("monitor")?)),
        None => None,
    };

    let mut buf = Vec::new();
    let mut header = String::from("i,bootstrap_cl,baseline_cl");
    if monitored.is_some() {
        header.push_str(",bootstrap_t2,bootstrap_signal,baseline_t2,baseline_signal");
    }
    writeln!(buf, "{header}").step("write output")?;
    let rows = stream.as_ref().map_or(cal.cl.len(), |s| s.len());
    for i in 1..=rows {
        write!(buf, "{i},{},{}", format_f64(cal.cl_at(i)), format_f64(base.cl)).step("write output")?;
        if let Some((boot, split)) = &monitored {
            let (b, s) = (&boot[i - 1], &split[i - 1]);
            write!(buf, ",{},{},{},{}", format_f64(b.t2), u8::from(b.signal), format_f64(s.t2), u8::from(s.signal))
                .step("write output")?;
        }
        buf.push(b'\n');
    }

    let mut inputs = json!({ "data": file_record(&data_path)? });
    if let Some(p) = &a.stream {
        inputs["stream"] = file_record(p)?;
    }
    let mut prov = provenance("compare-baseline", a, inputs);
    prov["baseline_warning"] = json!(base.warning);
    write_with_sidecar(&out, &buf, prov)?;

    println!("baseline (split {split}) constant CL = {}", format_f64(base.cl));
    println!(
        "bootstrap CL_1 = {}, CL_{} = {}",
        format_f64(cal.cl[0]),
        cal.cl.len(),
        format_f64(*cal.cl.last().unwrap_or(&f64::NAN))
    );
    if let Some((boot, split)) = &monitored {
        for (label, recs) in [("bootstrap", boot), ("baseline", split)] {
            let count = recs.iter().filter(|r| r.signal).count();
            match first_signal(recs) {
                Some(i) => println!("{label}: first signal at i = {i}, {count} signals"),
                None => println!("{label}: no signal"),
            }
        }
    }
    Ok(())
}
