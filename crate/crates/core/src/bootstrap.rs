//! Nested-bootstrap calibration of a time-varying MEWMA control limit.
//!
//! Each outer replicate refits the model to a with-replacement resample of
//! the training data and keeps its out-of-bag (OOB) rows. Each inner
//! replicate then streams scores drawn with replacement from the OOB scores
//! through the MEWMA and records `T²` against the outer fit's moments, with
//! the smoothed vector shrunk by `√k(λ, i, n)`. The limit `CL_i` is the upper
//! `α` quantile of the pooled `T_i` values.
//!
//! The inflation factor `k` corrects for the inner streams being drawn from a
//! finite OOB population of about `0.368 n` points, whose own sample mean
//! adds variance that live monitoring data does not have.

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::mewma::{estimate_moments, ewma_step, mean_cov, t2, ScoreMoments};
use crate::model::{FittedModel, ModelSpec};
use crate::rng::{substream, Domain, StreamRng};

/// Variance of the OOB sample mean relative to the full-sample mean,
/// `1/0.368 + 1 ≈ 3.72` (OOB population of `0.368 n` points).
pub const OOB_INFLATION: f64 = 3.72;

/// Smallest training set the calibration accepts.
pub const MIN_TRAIN: usize = 30;

const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Outer replicates `B_O`.
    pub outer: usize,
    /// Inner replicates `B_I` per outer replicate.
    pub inner: usize,
    pub lambda: f64,
    /// Pointwise false-alarm probability.
    pub alpha: f64,
    /// Number of control-limit points `M`.
    pub horizon: usize,
    /// Covariance ridge; `None` derives it from the full-sample covariance.
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Disable the `k` correction (shrink ≡ 1).
    pub naive: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { outer: 100, inner: 200, lambda: 0.01, alpha: 0.001, horizon: 1000, epsilon: None, seed: 0, naive: false }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer == 0 || self.inner == 0 || self.horizon == 0 {
            return Err(DriftError::Input("outer, inner and horizon must all be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(DriftError::Input(format!("lambda must lie in (0,1), got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(DriftError::Input(format!("alpha must lie in (0,0.5), got {}", self.alpha)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(DriftError::Input(format!("epsilon must be finite and >= 0, got {eps}")));
            }
        }
        Ok(())
    }

    /// Pooled sample count `B_O · B_I`.
    pub fn pooled(&self) -> usize {
        self.outer * self.inner
    }

    /// Fewer than 20 pooled values above the quantile makes it noisy.
    pub fn quantile_is_thin(&self) -> bool {
        (self.pooled() as f64) * self.alpha < 20.0
    }
}

/// Covariance inflation of the inner-bootstrap MEWMA relative to live
/// monitoring at step `i` with `n` training points.
pub fn inflation_factor(lambda: f64, i: usize, n: usize) -> f64 {
    let n = n as f64;
    let keep = 1.0 - lambda;
    let steady = lambda / (2.0 - lambda) * (1.0 - keep.powf(2.0 * i as f64));
    let ramp = (1.0 - keep.powf(i as f64)).powi(2);
    (steady + OOB_INFLATION / n * ramp) / (steady + ramp / n)
}

/// `k(λ, i, n)` for `i = 1..=horizon`.
pub fn k_curve(lambda: f64, horizon: usize, n: usize) -> Vec<f64> {
    (1..=horizon).map(|i| inflation_factor(lambda, i, n)).collect()
}

/// Upper-`alpha` empirical quantile: the ascending order statistic at
/// 1-based rank `⌈(1 − α) N⌉`.
pub fn quantile_upper(values: &[f64], alpha: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[upper_rank(values.len(), alpha) - 1]
}

/// `⌈(1 − α) N⌉ = N − ⌊α N⌋`, with the floor guarded against rounding in `α N`.
pub fn upper_rank(n: usize, alpha: f64) -> usize {
    let an = alpha * n as f64;
    let above = (an + 1e-9 * an.max(1.0)).floor() as usize;
    (n - above.min(n - 1)).max(1)
}

/// One outer resample.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterDraw {
    /// Row indices of the resample, in draw order.
    pub indices: Vec<usize>,
    /// Rows never drawn, ascending.
    pub oob: Vec<usize>,
}

/// Draw `n` row indices uniformly with replacement and collect the OOB rows.
pub fn draw_outer_indices(n: usize, rng: &mut StreamRng) -> OuterDraw {
    let mut seen = vec![false; n];
    let indices: Vec<usize> = (0..n)
        .map(|_| {
            let k = rng.random_range(0..n);
            seen[k] = true;
            k
        })
        .collect();
    let oob = seen.iter().enumerate().filter(|(_, s)| !**s).map(|(k, _)| k).collect();
    OuterDraw { indices, oob }
}

/// Resampled dataset and OOB row indices.
pub fn draw_outer(data: &Dataset, rng: &mut StreamRng) -> (Dataset, Vec<usize>) {
    let draw = draw_outer_indices(data.len(), rng);
    (data.select(&draw.indices), draw.oob)
}

/// Draw for outer replicate `b`, redrawing from the next substream while the
/// OOB set is empty.
fn outer_draw_for(n: usize, seed: u64, b: usize) -> Result<OuterDraw> {
    for attempt in 0..MAX_REDRAWS {
        let draw = draw_outer_indices(n, &mut substream(seed, Domain::Outer, b as u64, attempt));
        if !draw.oob.is_empty() {
            return Ok(draw);
        }
        info!("outer replicate {b}: empty OOB set on attempt {attempt}, redrawing");
    }
    Err(DriftError::Input(format!("outer replicate {b}: no non-empty OOB set in {MAX_REDRAWS} draws")))
}

/// One inner stream: `T_1..T_M` with `T_i = t2(z_i, outer, √k_i)`.
pub fn inner_t_curve<S: AsRef<[f64]>>(
    oob_scores: &[S],
    outer_moments: &ScoreMoments,
    lambda: f64,
    k_curve: &[f64],
    rng: &mut StreamRng,
) -> Vec<f64> {
    let shrink: Vec<f64> = k_curve.iter().map(|k| k.sqrt()).collect();
    let mut out = vec![0.0; shrink.len()];
    inner_stream(oob_scores, outer_moments, lambda, &shrink, rng, &mut out);
    out
}

fn inner_stream<S: AsRef<[f64]>>(
    oob_scores: &[S],
    moments: &ScoreMoments,
    lambda: f64,
    shrink: &[f64],
    rng: &mut StreamRng,
    out: &mut [f64],
) {
    assert!(!oob_scores.is_empty(), "inner bootstrap needs at least one OOB score");
    let mut z = vec![0.0; moments.dim()];
    let m = oob_scores.len();
    for (t, s) in out.iter_mut().zip(shrink) {
        let pick = oob_scores[rng.random_range(0..m)].as_ref();
        ewma_step(&mut z, pick, lambda);
        *t = t2(&z, moments, *s);
    }
}

/// Output of [`calibrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: FittedModel,
    pub spec: ModelSpec,
    /// Moments of the full-training scores.
    pub moments: ScoreMoments,
    /// `CL_1..CL_M`.
    pub cl: Vec<f64>,
    pub k_curve: Vec<f64>,
    pub config: BootstrapConfig,
    pub n_train: usize,
}

impl Calibration {
    /// Limit at 1-based step `i`; steps past the horizon reuse `CL_M`.
    pub fn cl_at(&self, i: usize) -> f64 {
        let idx = i.clamp(1, self.cl.len()) - 1;
        self.cl[idx]
    }
}

/// Run the full nested bootstrap.
pub fn calibrate(data: &Dataset, spec: &ModelSpec, config: &BootstrapConfig) -> Result<Calibration> {
    config.validate()?;
    let n = data.len();
    if n < MIN_TRAIN {
        return Err(DriftError::Input(format!("calibration needs at least {MIN_TRAIN} rows, got {n}")));
    }
    if config.quantile_is_thin() {
        warn!(
            "B_O·B_I·alpha = {:.1} < 20: the upper quantile rests on very few pooled values",
            config.pooled() as f64 * config.alpha
        );
    }

    let model = spec.fit(data)?;
    let scores = model.scores(data)?;
    let (mean, cov) = mean_cov(&scores)?;
    let epsilon = config.epsilon.unwrap_or_else(|| ScoreMoments::default_epsilon(&cov));
    let moments = ScoreMoments::from_parts(mean, cov, epsilon)?;

    let k = k_curve(config.lambda, config.horizon, n);
    let shrink: Vec<f64> = if config.naive { vec![1.0; k.len()] } else { k.iter().map(|v| v.sqrt()).collect() };
    let keep = config.pooled() - upper_rank(config.pooled(), config.alpha) + 1;

    let per_outer: Vec<Vec<Vec<f64>>> = (0..config.outer)
        .into_par_iter()
        .map(|b| {
            outer_replicate(data, spec, &model, config, epsilon, &shrink, keep, b)
                .map_err(|e| DriftError::Replicate { replicate: b, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    // Pool in replicate order. Only the `keep` largest values per step can
    // influence the quantile.
    let cl = (0..config.horizon)
        .map(|i| {
            let mut pooled: Vec<f64> = per_outer.iter().flat_map(|tops| tops[i].iter().copied()).collect();
            pooled.sort_by(|a, b| b.total_cmp(a));
            pooled[keep - 1]
        })
        .collect();

    Ok(Calibration { model, spec: spec.clone(), moments, cl, k_curve: k, config: config.clone(), n_train: n })
}

/// Returns, for each step `i`, the `keep` largest inner `T_i` values of
/// outer replicate `b`.
#[allow(clippy::too_many_arguments)]
fn outer_replicate(
    data: &Dataset,
    spec: &ModelSpec,
    reference: &FittedModel,
    config: &BootstrapConfig,
    epsilon: f64,
    shrink: &[f64],
    keep: usize,
    b: usize,
) -> Result<Vec<Vec<f64>>> {
    let draw = outer_draw_for(data.len(), config.seed, b)?;
    let resample = data.select(&draw.indices);
    let refit = spec.refit(&resample, reference)?;
    let outer_moments = estimate_moments(&refit.scores(&resample)?, Some(epsilon))?;
    let oob_scores = refit.scores(&data.select(&draw.oob))?;

    let m = config.horizon;
    let mut curves = vec![0.0; config.inner * m];
    for (j, curve) in curves.chunks_exact_mut(m).enumerate() {
        let mut rng = substream(config.seed, Domain::Inner, b as u64, j as u64);
        inner_stream(&oob_scores, &outer_moments, config.lambda, shrink, &mut rng, curve);
    }

    let mut column = vec![0.0; config.inner];
    Ok((0..m)
        .map(|i| {
            for (j, c) in column.iter_mut().enumerate() {
                *c = curves[j * m + i];
            }
            if keep < column.len() {
                column.select_nth_unstable_by(keep - 1, |a, b| b.total_cmp(a));
                column[..keep].to_vec()
            } else {
                column.clone()
            }
        })
        .collect())
}

/// The split-sample quantile is flagged unreliable when fewer than this many
/// tail points are expected above it.
pub const BASELINE_MIN_EXCEEDANCES: f64 = 10.0;

/// Split-sample comparison: model fit on the head of the data, moments and
/// a constant limit from the MEWMA over the tail's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCalibration {
    pub model: FittedModel,
    pub moments: ScoreMoments,
    pub cl: f64,
    pub lambda: f64,
    /// Set when the tail has fewer than `BASELINE_MIN_EXCEEDANCES / α` points.
    pub warning: Option<String>,
}

pub fn baseline_split_cl(
    data: &Dataset,
    split_fraction: f64,
    spec: &ModelSpec,
    lambda: f64,
    alpha: f64,
    epsilon: Option<f64>,
) -> Result<BaselineCalibration> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(DriftError::Input(format!("split fraction must lie in (0,1), got {split_fraction}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(DriftError::Input("lambda and alpha must lie in (0,1)".into()));
    }
    let cut = (split_fraction * data.len() as f64).floor() as usize;
    let (fit_part, cl_part) = data.split_at(cut);
    if fit_part.len() < MIN_TRAIN || cl_part.len() < MIN_TRAIN {
        return Err(DriftError::Input(format!(
            "both splits need at least {MIN_TRAIN} rows, got {} and {}",
            fit_part.len(),
            cl_part.len()
        )));
    }
    let warning = ((cl_part.len() as f64) * alpha < BASELINE_MIN_EXCEEDANCES).then(|| {
        let msg = format!(
            "only {} points set the limit at alpha = {alpha}; at least {} are needed for a reliable quantile",
            cl_part.len(),
            (BASELINE_MIN_EXCEEDANCES / alpha).ceil()
        );
        warn!("{msg}");
        msg
    });

    let model = spec.fit(&fit_part)?;
    let scores = model.scores(&cl_part)?;
    let moments = estimate_moments(&scores, epsilon)?;
    let mut z = vec![0.0; moments.dim()];
    let stats: Vec<f64> = scores
        .iter()
        .map(|s| {
            ewma_step(&mut z, s, lambda);
            t2(&z, &moments, 1.0)
        })
        .collect();
    let cl = quantile_upper(&stats, alpha);
    Ok(BaselineCalibration { model, moments, cl, lambda, warning })
}
