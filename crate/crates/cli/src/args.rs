//! Command-line flags and their JSON-config mirror.
//!
//! Every flag has a JSON key of the same (kebab-case) name. A `--config`
//! file supplies values for any flags not given on the command line.

use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use driftguard::datagen::{LinearMode, OscSampling};
use driftguard::model::ModelKind;

#[derive(Parser, Debug)]
#[command(name = "driftguard", version, about = "Concept-drift monitoring with bootstrap control limits")]
pub struct Cli {
    /// JSON file whose keys mirror the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a training set or monitoring stream as CSV.
    Simulate(SimulateArgs),
    /// Fit a model and set bootstrap control limits.
    Calibrate(CalibrateArgs),
    /// Run a stream against a calibration.
    Monitor(MonitorArgs),
    /// Replicated false-alarm study on unshifted streams.
    FarStudy(StudyArgs),
    /// Replicated detection-delay study on shifted streams.
    DetectStudy(StudyArgs),
    /// Bootstrap limits next to the split-sample constant limit.
    CompareBaseline(CompareArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Calibrate(_) => "calibrate",
            Command::Monitor(_) => "monitor",
            Command::FarStudy(_) => "far-study",
            Command::DetectStudy(_) => "detect-study",
            Command::CompareBaseline(_) => "compare-baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    Linear,
    Oscillator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Single,
    Mixture,
}

impl From<ModeArg> for LinearMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => LinearMode::Single,
            ModeArg::Mixture => LinearMode::Mixture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingArg {
    RandomTimes,
    Sequential,
}

impl From<SamplingArg> for OscSampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::RandomTimes => OscSampling::RandomTimes,
            SamplingArg::Sequential => OscSampling::Sequential,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Linear,
    Mlp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Linear => ModelKind::Linear,
            ModelArg::Mlp => ModelKind::Mlp,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ModelArgs {
    /// Score model [default: linear, or mlp for the oscillator]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelArg>,
    /// Ridge penalty γ [default: 0.1]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Network training epochs
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Network gradient-descent step size
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    /// Network momentum coefficient
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    /// Seed for network initialization
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seed: Option<u64>,
    /// Gradient norm above which a network fit is flagged unconverged
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct BootstrapArgs {
    /// Outer bootstrap replicates B_O [default: 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    /// Inner bootstrap streams B_I per outer replicate [default: 200]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
    /// MEWMA smoothing λ [default: 0.01]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Pointwise false-alarm rate α [default: 0.001]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Control-limit horizon M [default: 1000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Covariance ridge ε [default: 1e-8 · trace / d]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Master seed [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Disable the covariance-inflation correction
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub naive: bool,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct OscArgs {
    /// Oscillator measurement-noise sd [default: 0.03]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Initial state p1,v1,p2,v2 [default: 1,0,0,0]
    #[arg(long, value_delimiter = ',', num_args = 4)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state0: Option<Vec<f64>>,
    /// How oscillator stream observations are placed in time [default: random-times]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingArg>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SimulateArgs {
    /// [default: linear]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioArg>,
    /// Linear response mechanism [default: single]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeArg>,
    /// Rows [default: 2000 linear, 3000 oscillator]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Make a monitoring stream whose rows after this count are drifted
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_at: Option<usize>,
    /// Oscillator training data under the drifted parameters
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub shifted: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub osc: OscArgs,
    /// Output CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct CalibrateArgs {
    /// Training CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Output calibration JSON
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct MonitorArgs {
    /// Calibration JSON
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    /// Stream CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<PathBuf>,
    /// Output CSV of i,t2,cl,signal
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct StudyArgs {
    /// [default: linear]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub osc: OscArgs,
    /// Replicates R [default: 20 linear, 5 oscillator]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    /// Training rows per replicate [default: 2000 linear, 3000 oscillator]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Monitoring stream length [default: 1000]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream_len: Option<usize>,
    /// Pre-shift observations in detection streams [default: 200]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_at: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub bootstrap: BootstrapArgs,
    /// Fraction of training rows used to fit the split-sample baseline [default: 0.5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_fraction: Option<f64>,
    /// Skip the split-sample baseline arm
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub no_baseline: bool,
    /// Skip the unshifted control arm of detection studies
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub no_control: bool,
    /// Folds for the network's cross-validated R² (0 disables) [default: 5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
    /// Output directory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct CompareArgs {
    /// Training CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Optional stream CSV to monitor with both limits
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stream: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub bootstrap: BootstrapArgs,
    /// [default: 0.5]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_fraction: Option<f64>,
    /// Output CSV
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Long flag names accepted by subcommand `name`.
fn known_keys(name: &str) -> Vec<String> {
    let cmd = Cli::command();
    cmd.find_subcommand(name)
        .map(|sub| sub.get_arguments().filter_map(|a| a.get_long()).map(str::to_string).collect())
        .unwrap_or_default()
}

/// Overlay command-line values on a config file's values.
pub fn merge_config<T>(command: &str, flags: &T, config: Option<&Path>) -> Result<T, String>
where
    T: Serialize + DeserializeOwned,
{
    let Some(path) = config else {
        return serde_json::from_value(serde_json::to_value(flags).map_err(|e| e.to_string())?).map_err(|e| e.to_string());
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("config {} is not valid JSON: {e}", path.display()))?;
    let serde_json::Value::Object(mut merged) = value else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    let known = known_keys(command);
    let unknown: Vec<&String> = merged.keys().filter(|k| *k != "config" && !known.contains(k)).collect();
    if !unknown.is_empty() {
        return Err(format!("unknown key(s) for `{command}` in {}: {unknown:?}", path.display()));
    }
    merged.remove("config");
    if let serde_json::Value::Object(cli) = serde_json::to_value(flags).map_err(|e| e.to_string())? {
        merged.extend(cli);
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| format!("config {}: {e}", path.display()))
}
