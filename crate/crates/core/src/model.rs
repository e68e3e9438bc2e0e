//! The score models behind one interface.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::linmodel::{fit_ridge, FittedLinearModel};
use crate::nnmodel::{fit_mlp, fit_mlp_from, FittedMlp, TrainConfig, SCORE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

/// How to fit a model: its kind, penalty, and (for the network) training setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub gamma: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn linear(gamma: f64) -> Self {
        Self { kind: ModelKind::Linear, gamma, train: TrainConfig::default() }
    }

    pub fn mlp(gamma: f64, train: TrainConfig) -> Self {
        Self { kind: ModelKind::Mlp, gamma, train }
    }

    pub fn fit(&self, data: &Dataset) -> Result<FittedModel> {
        match self.kind {
            ModelKind::Linear => fit_ridge(data, self.gamma).map(FittedModel::Linear),
            ModelKind::Mlp => fit_mlp(data, self.gamma, &self.train).map(FittedModel::Mlp),
        }
    }

    /// Refit on a bootstrap resample with the same penalty. The network
    /// starts from `reference`'s parameters.
    pub fn refit(&self, data: &Dataset, reference: &FittedModel) -> Result<FittedModel> {
        match (self.kind, reference) {
            (ModelKind::Linear, _) => fit_ridge(data, self.gamma).map(FittedModel::Linear),
            (ModelKind::Mlp, FittedModel::Mlp(start)) => {
                fit_mlp_from(data, self.gamma, &self.train, start).map(FittedModel::Mlp)
            }
            (ModelKind::Mlp, _) => fit_mlp(data, self.gamma, &self.train).map(FittedModel::Mlp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Linear(FittedLinearModel),
    Mlp(FittedMlp),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Linear(_) => ModelKind::Linear,
            FittedModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn score_dim(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.dim(),
            FittedModel::Mlp(_) => SCORE_DIM,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.dim() - 1,
            FittedModel::Mlp(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Mlp(m) => m.predict(x),
        }
    }

    pub fn score(&self, x: &[f64], y: f64) -> Vec<f64> {
        match self {
            FittedModel::Linear(m) => m.score(x, y),
            FittedModel::Mlp(m) => m.score(x, y),
        }
    }

    /// Score vectors for every row of `data`.
    pub fn scores(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        if data.n_features() != self.n_features() {
            return Err(DriftError::Dimension { expected: self.n_features(), got: data.n_features() });
        }
        Ok(data.iter().map(|(x, y)| self.score(x, y)).collect())
    }
}
