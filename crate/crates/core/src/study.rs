//! Replicated false-alarm and detection-delay studies.
//!
//! Each replicate draws fresh training data, calibrates, draws a fresh
//! monitoring stream and records which observations signal. Randomness flows
//! from the study seed through per-replicate child seeds, so results do not
//! depend on scheduling.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{baseline_split_cl, calibrate, BootstrapConfig};
use crate::data::{format_f64, Dataset};
use crate::datagen::{
    gen_linear, gen_linear_shifted, gen_oscillator, gen_oscillator_random_times, gen_oscillator_stream, LinearMode, OscParams, OscSampling,
    OscState, OSC_HORIZON,
};
use crate::error::{DriftError, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::monitor::MonitorRecord;
use crate::nnmodel::{cross_validated_r2, TrainConfig};
use crate::rng::{child_seed, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scenario {
    /// Noisy line; drift switches half the responses to a second line.
    Linear,
    /// Damped two-mass oscillator; drift changes masses and the first spring.
    Oscillator {
        sigma: f64,
        #[serde(default)]
        params: OscParams,
        #[serde(default)]
        state0: OscState,
        #[serde(default)]
        sampling: OscSampling,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bootstrap,
    Naive,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bootstrap => "bootstrap",
            Method::Naive => "naive",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub replicates: usize,
    pub n_train: usize,
    pub stream_len: usize,
    /// Observations `1..=shift_at` are pre-shift (detection studies only).
    pub shift_at: usize,
    pub model: ModelSpec,
    pub bootstrap: BootstrapConfig,
    pub split_fraction: f64,
    pub baseline: bool,
    pub naive: bool,
    /// Detection studies: also monitor an unshifted stream.
    pub control: bool,
    /// Folds for the network's cross-validated R²; 0 disables.
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self::linear()
    }
}

impl StudyConfig {
    /// Desk-scale linear setup.
    pub fn linear() -> Self {
        Self {
            scenario: Scenario::Linear,
            replicates: 20,
            n_train: 2000,
            stream_len: 1000,
            shift_at: 200,
            model: ModelSpec::linear(0.1),
            bootstrap: BootstrapConfig::default(),
            split_fraction: 0.5,
            baseline: true,
            naive: false,
            control: true,
            cv_folds: 0,
            seed: 0,
        }
    }

    /// Desk-scale oscillator setup at noise level `sigma`.
    pub fn oscillator(sigma: f64) -> Self {
        Self {
            scenario: Scenario::Oscillator {
                sigma,
                params: OscParams::default(),
                state0: OscState::default(),
                sampling: OscSampling::default(),
            },
            replicates: 5,
            n_train: 3000,
            model: ModelSpec::mlp(0.1, TrainConfig::default()),
            cv_folds: 5,
            ..Self::linear()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.stream_len == 0 {
            return Err(DriftError::Input("replicates and stream_len must be positive".into()));
        }
        let expected = match self.scenario {
            Scenario::Linear => ModelKind::Linear,
            Scenario::Oscillator { .. } => ModelKind::Mlp,
        };
        if self.model.kind != expected {
            return Err(DriftError::Input(format!("scenario expects a {expected} model, got {}", self.model.kind)));
        }
        self.bootstrap.validate()
    }

    fn methods(&self) -> Vec<Method> {
        let mut m = vec![Method::Bootstrap];
        if self.naive {
            m.push(Method::Naive);
        }
        if self.baseline {
            m.push(Method::Baseline);
        }
        m
    }

    fn training_data(&self, seed: u64) -> Result<Dataset> {
        match &self.scenario {
            Scenario::Linear => Ok(gen_linear(self.n_train, LinearMode::Single, seed)),
            Scenario::Oscillator { sigma, params, state0, .. } => gen_oscillator(params, self.n_train, *sigma, *state0, seed),
        }
    }

    /// Monitoring stream; `shift_at = None` keeps it in control throughout.
    fn stream(&self, shift_at: Option<usize>, seed: u64) -> Result<Dataset> {
        let shift = shift_at.unwrap_or(usize::MAX);
        match &self.scenario {
            Scenario::Linear => Ok(match shift_at {
                Some(s) => gen_linear_shifted(self.stream_len, s, seed),
                None => gen_linear(self.stream_len, LinearMode::Single, seed),
            }),
            Scenario::Oscillator { sigma, params, state0, sampling } => {
                let (n, shifted) = (self.stream_len, params.shifted());
                match sampling {
                    OscSampling::RandomTimes => gen_oscillator_random_times(params, &shifted, n, shift, *sigma, *state0, seed),
                    OscSampling::Sequential => {
                        let dt = OSC_HORIZON / (self.n_train.max(2) - 1) as f64;
                        gen_oscillator_stream(params, &shifted, n, shift, dt, *sigma, *state0, seed)
                    }
                }
            }
        }
    }
}

/// Signals of one method across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub method: Method,
    /// Replicates signalling at each 1-based index (position `i - 1`).
    pub signal_counts: Vec<usize>,
    /// `signal_counts / replicates`.
    pub far_curve: Vec<f64>,
    /// Per replicate: first signal after the shift (or at all, for
    /// false-alarm studies).
    pub detect_times: Vec<Option<usize>>,
    /// Per replicate: any signal at or before the shift.
    pub pre_shift_signal: Vec<bool>,
    /// Per replicate: total signals in the stream.
    pub total_signals: Vec<usize>,
}

impl ArmResult {
    fn from_signals(method: Method, signals: &[Vec<bool>], shift_at: usize) -> Self {
        let len = signals.first().map_or(0, Vec::len);
        let mut counts = vec![0usize; len];
        for s in signals {
            for (c, v) in counts.iter_mut().zip(s) {
                *c += usize::from(*v);
            }
        }
        let r = signals.len() as f64;
        Self {
            method,
            far_curve: counts.iter().map(|c| *c as f64 / r).collect(),
            signal_counts: counts,
            detect_times: signals
                .iter()
                .map(|s| s.iter().enumerate().skip(shift_at).find(|(_, v)| **v).map(|(k, _)| k + 1))
                .collect(),
            pre_shift_signal: signals.iter().map(|s| s.iter().take(shift_at).any(|v| *v)).collect(),
            total_signals: signals.iter().map(|s| s.iter().filter(|v| **v).count()).collect(),
        }
    }

    /// Mean of the pointwise false-alarm curve.
    pub fn mean_far(&self) -> f64 {
        self.far_curve.iter().sum::<f64>() / self.far_curve.len().max(1) as f64
    }

    /// Median first-signal index; replicates that never signal count as +∞.
    pub fn median_detect(&self) -> f64 {
        let mut t: Vec<f64> = self.detect_times.iter().map(|d| d.map_or(f64::INFINITY, |v| v as f64)).collect();
        median(&mut t)
    }

    pub fn pre_shift_fraction(&self) -> f64 {
        self.pre_shift_signal.iter().filter(|v| **v).count() as f64 / self.pre_shift_signal.len().max(1) as f64
    }

    pub fn quiet_fraction(&self) -> f64 {
        self.total_signals.iter().filter(|v| **v == 0).count() as f64 / self.total_signals.len().max(1) as f64
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    // An infinite upper middle (no signal) makes the median infinite too.
    if values.len() % 2 == 1 || values[m].is_infinite() {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    FarStudy,
    DetectStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub arms: Vec<ArmResult>,
    /// Bootstrap limit on an unshifted stream (detection studies).
    pub control: Option<ArmResult>,
    /// Per-replicate cross-validated R² of the network.
    pub cv_r2: Vec<f64>,
    /// Per-replicate warnings (e.g. unreliable baseline quantile).
    pub warnings: Vec<String>,
    pub config: StudyConfig,
}

impl StudyResult {
    pub fn arm(&self, method: Method) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.method == method)
    }
}

struct ReplicateOutcome {
    signals: Vec<Vec<bool>>,
    control: Option<Vec<bool>>,
    cv_r2: Option<f64>,
    warnings: Vec<String>,
}

fn signals(records: &[MonitorRecord]) -> Vec<bool> {
    records.iter().map(|r| r.signal).collect()
}

fn run_replicate(cfg: &StudyConfig, kind: StudyKind, r: usize) -> Result<ReplicateOutcome> {
    let rep = child_seed(cfg.seed, Domain::Calibration, r as u64);
    let data = cfg.training_data(child_seed(rep, Domain::Data, 0))?;
    let stream_seed = child_seed(rep, Domain::Stream, 0);
    let shift = (kind == StudyKind::DetectStudy).then_some(cfg.shift_at);
    let stream = cfg.stream(shift, stream_seed)?;
    let boot = BootstrapConfig { seed: child_seed(rep, Domain::Outer, 0), naive: false, ..cfg.bootstrap.clone() };

    let mut warnings = Vec::new();
    let mut out = Vec::new();
    let mut control = None;
    for method in cfg.methods() {
        let records = match method {
            Method::Bootstrap | Method::Naive => {
                let cal = calibrate(&data, &cfg.model, &BootstrapConfig { naive: method == Method::Naive, ..boot.clone() })?;
                if method == Method::Bootstrap && kind == StudyKind::DetectStudy && cfg.control {
                    let quiet = cfg.stream(None, child_seed(rep, Domain::Stream, 1))?;
                    control = Some(signals(&cal.monitor(&quiet)?));
                }
                cal.monitor(&stream)?
            }
            Method::Baseline => {
                let base = baseline_split_cl(
                    &data,
                    cfg.split_fraction,
                    &cfg.model,
                    cfg.bootstrap.lambda,
                    cfg.bootstrap.alpha,
                    cfg.bootstrap.epsilon,
                )?;
                if let Some(w) = base.warning.clone() {
                    warnings.push(format!("replicate {r}: {w}"));
                }
                base.monitor(&stream)?
            }
        };
        out.push(signals(&records));
    }

    let cv_r2 = if cfg.cv_folds > 0 && cfg.model.kind == ModelKind::Mlp {
        Some(cross_validated_r2(&data, cfg.model.gamma, &cfg.model.train, cfg.cv_folds, child_seed(rep, Domain::Folds, 0))?)
    } else {
        None
    };
    Ok(ReplicateOutcome { signals: out, control, cv_r2, warnings })
}

/// Pointwise false-alarm rates on unshifted streams.
pub fn far_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run_study(cfg, StudyKind::FarStudy)
}

/// First-signal indices on streams that shift after `shift_at`.
pub fn detect_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run_study(cfg, StudyKind::DetectStudy)
}

fn run_study(cfg: &StudyConfig, kind: StudyKind) -> Result<StudyResult> {
    cfg.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, kind, r).map_err(|e| DriftError::Replicate { replicate: r, source: Box::new(e) }))
        .collect::<Result<_>>()?;

    let shift = if kind == StudyKind::DetectStudy { cfg.shift_at } else { 0 };
    let arms = cfg
        .methods()
        .into_iter()
        .enumerate()
        .map(|(m, method)| {
            let per_rep: Vec<Vec<bool>> = outcomes.iter().map(|o| o.signals[m].clone()).collect();
            ArmResult::from_signals(method, &per_rep, shift)
        })
        .collect();
    let control = (kind == StudyKind::DetectStudy && cfg.control).then(|| {
        let per_rep: Vec<Vec<bool>> = outcomes.iter().filter_map(|o| o.control.clone()).collect();
        ArmResult::from_signals(Method::Bootstrap, &per_rep, 0)
    });
    Ok(StudyResult {
        kind,
        arms,
        control,
        cv_r2: outcomes.iter().filter_map(|o| o.cv_r2).collect(),
        warnings: outcomes.into_iter().flat_map(|o| o.warnings).collect(),
        config: cfg.clone(),
    })
}

impl StudyResult {
    /// `i` followed by one pointwise-rate column per method.
    pub fn write_far_curve<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec!["i".to_string()];
        header.extend(self.arms.iter().map(|a| a.method.name().to_string()));
        w.write_record(&header)?;
        let len = self.arms.first().map_or(0, |a| a.far_curve.len());
        for i in 0..len {
            let mut row = vec![(i + 1).to_string()];
            row.extend(self.arms.iter().map(|a| format_f64(a.far_curve[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per replicate: first-signal index and pre-shift flag per method
    /// (empty field when the replicate never signals).
    pub fn write_detect_times<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec!["replicate".to_string()];
        for a in &self.arms {
            header.push(format!("{}_first_signal", a.method.name()));
            header.push(format!("{}_pre_shift_signal", a.method.name()));
        }
        w.write_record(&header)?;
        let reps = self.arms.first().map_or(0, |a| a.detect_times.len());
        for r in 0..reps {
            let mut row = vec![(r + 1).to_string()];
            for a in &self.arms {
                row.push(a.detect_times[r].map(|v| v.to_string()).unwrap_or_default());
                row.push(u8::from(a.pre_shift_signal[r]).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Headline numbers per method.
    pub fn summary(&self) -> serde_json::Value {
        let arm = |a: &ArmResult| {
            serde_json::json!({
                "method": a.method.name(),
                "mean_far": a.mean_far(),
                "median_first_signal": finite_or_null(a.median_detect()),
                "pre_shift_signal_fraction": a.pre_shift_fraction(),
                "quiet_fraction": a.quiet_fraction(),
            })
        };
        serde_json::json!({
            "kind": self.kind,
            "replicates": self.config.replicates,
            "arms": self.arms.iter().map(arm).collect::<Vec<_>>(),
            "control": self.control.as_ref().map(arm),
            "cv_r2": self.cv_r2,
            "warnings": self.warnings.len(),
        })
    }

    /// Write `far_curve.csv`, `detect_times.csv` and `summary.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path, provenance: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_far_curve(std::io::BufWriter::new(std::fs::File::create(dir.join("far_curve.csv"))?))?;
        self.write_detect_times(std::io::BufWriter::new(std::fs::File::create(dir.join("detect_times.csv"))?))?;
        let doc = serde_json::json!({
            "provenance": provenance,
            "config": self.config,
            "summary": self.summary(),
            "warnings": self.warnings,
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}
