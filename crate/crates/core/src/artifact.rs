//! JSON form of a [`Calibration`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapConfig, Calibration};
use crate::error::{DriftError, Result};
use crate::mewma::{MomentsRecord, ScoreMoments};
use crate::model::{FittedModel, ModelKind, ModelSpec};
use crate::nnmodel::TrainConfig;

pub const CALIBRATION_VERSION: &str = "driftguard-cal/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub version: String,
    pub model_kind: ModelKind,
    pub model: FittedModel,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub horizon: usize,
    pub seed: u64,
    pub outer: usize,
    pub inner: usize,
    pub naive: bool,
    pub n_train: usize,
    /// Training setup used for network refits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    /// Mean training score `s̄`.
    pub mean: Vec<f64>,
    /// Training score covariance, row-major.
    pub cov: Vec<f64>,
    pub cl: Vec<f64>,
    pub k: Vec<f64>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl Calibration {
    pub fn to_record(&self, provenance: serde_json::Value) -> CalibrationRecord {
        let moments = MomentsRecord::from(&self.moments);
        CalibrationRecord {
            version: CALIBRATION_VERSION.to_string(),
            model_kind: self.model.kind(),
            model: self.model.clone(),
            gamma: self.spec.gamma,
            epsilon: moments.epsilon,
            lambda: self.config.lambda,
            alpha: self.config.alpha,
            horizon: self.config.horizon,
            seed: self.config.seed,
            outer: self.config.outer,
            inner: self.config.inner,
            naive: self.config.naive,
            n_train: self.n_train,
            train: (self.spec.kind == ModelKind::Mlp).then(|| self.spec.train.clone()),
            mean: moments.mean,
            cov: moments.cov,
            cl: self.cl.clone(),
            k: self.k_curve.clone(),
            provenance,
        }
    }

    pub fn from_record(rec: CalibrationRecord) -> Result<Calibration> {
        if rec.version != CALIBRATION_VERSION {
            return Err(DriftError::Version(rec.version));
        }
        if rec.model.kind() != rec.model_kind {
            return Err(DriftError::Input(format!(
                "model_kind `{}` does not match serialized model `{}`",
                rec.model_kind,
                rec.model.kind()
            )));
        }
        if rec.cl.is_empty() || rec.cl.len() != rec.horizon || rec.k.len() != rec.horizon {
            return Err(DriftError::Input("cl and k must both have `horizon` entries".into()));
        }
        let moments = ScoreMoments::try_from(MomentsRecord { mean: rec.mean, cov: rec.cov, epsilon: rec.epsilon })?;
        if moments.dim() != rec.model.score_dim() {
            return Err(DriftError::Dimension { expected: rec.model.score_dim(), got: moments.dim() });
        }
        Ok(Calibration {
            spec: ModelSpec { kind: rec.model_kind, gamma: rec.gamma, train: rec.train.unwrap_or_default() },
            model: rec.model,
            moments,
            cl: rec.cl,
            k_curve: rec.k,
            config: BootstrapConfig {
                outer: rec.outer,
                inner: rec.inner,
                lambda: rec.lambda,
                alpha: rec.alpha,
                horizon: rec.horizon,
                epsilon: Some(rec.epsilon),
                seed: rec.seed,
                naive: rec.naive,
            },
            n_train: rec.n_train,
        })
    }

    pub fn to_json(&self, provenance: serde_json::Value) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record(provenance))?)
    }

    pub fn from_json(text: &str) -> Result<Calibration> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        // Check the version before the schema so old artifacts fail clearly.
        match value.get("version").and_then(|v| v.as_str()) {
            Some(CALIBRATION_VERSION) => {}
            Some(other) => return Err(DriftError::Version(other.to_string())),
            None => return Err(DriftError::Version("<missing>".into())),
        }
        Calibration::from_record(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<Calibration> {
        Calibration::from_json(&std::fs::read_to_string(path)?)
    }
}
